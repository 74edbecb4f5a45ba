"""Exception types shared across the library."""


class EngmfLabError(Exception):
    """Base class for all engmf_lab errors."""


class InvalidModelError(EngmfLabError):
    """Model definition violates a structural requirement (e.g. too few states)."""


class DivergenceError(EngmfLabError):
    """A state became non-finite during integration or filtering.

    Carries the integrator step index at which the blow-up was detected.
    """

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class NonDifferentiablePointError(EngmfLabError):
    """An observation Jacobian was requested at a non-smooth point."""


class InsufficientEnsembleError(EngmfLabError):
    """An operation needs more ensemble members than were supplied."""


class SingularKernelError(EngmfLabError):
    """Kernel covariance could not be factorized even after jitter escalation."""


class ObservationDegeneracyError(EngmfLabError):
    """Innovation covariance H B H^T + R could not be factorized."""


class DegenerateLikelihoodError(EngmfLabError):
    """Every particle received zero likelihood; the filter cannot reweight."""


class ConfigError(EngmfLabError):
    """Experiment configuration file is malformed or contains unknown keys."""
