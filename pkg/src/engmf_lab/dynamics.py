"""Chaotic test models, a fixed-step RK4 integrator, and observation operators.

States are column vectors; every tendency and observation operator accepts
either a single state of shape ``(n,)`` or a batch of states of shape
``(n, K)`` and preserves that layout.  Observation Jacobians return ``(m, n)``
for a single state and ``(K, m, n)`` for a batch.
"""

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .errors import DivergenceError, InvalidModelError, NonDifferentiablePointError

L63_SIGMA = 10.0
L63_RHO = 28.0
L63_BETA = 8.0 / 3.0
L96_FORCING = 8.0


def lorenz63_tendency(state, sigma=L63_SIGMA, rho=L63_RHO, beta=L63_BETA):
    """Canonical Lorenz '63 right-hand side (includes the -y term in y')."""
    x, y, z = state[0], state[1], state[2]
    return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def lorenz63_critical_point(sigma=L63_SIGMA, rho=L63_RHO, beta=L63_BETA):
    """Center of one butterfly wing: (sqrt(beta(rho-1)), sqrt(beta(rho-1)), rho-1)."""
    c = np.sqrt(beta * (rho - 1.0))
    return np.array([c, c, rho - 1.0])


def lorenz96_tendency(state, forcing=L96_FORCING):
    """Lorenz '96 right-hand side with cyclic boundary: -x_{k-1}(x_{k-2}-x_{k+1}) - x_k + F."""
    if state.shape[0] < 4:
        raise InvalidModelError("Lorenz '96 needs at least 4 state variables, got %d" % state.shape[0])
    xm1 = np.roll(state, 1, axis=0)
    xm2 = np.roll(state, 2, axis=0)
    xp1 = np.roll(state, -1, axis=0)
    return -xm1 * (xm2 - xp1) - state + forcing


@dataclass(frozen=True)
class ModelSpec:
    """A fixed-step ODE model used between assimilation times.

    The assimilation interval is rounded to an integer number of internal RK4
    steps; ``process_noise_std`` exists so twin-data generation is explicit
    about the (always zero) model error.
    """

    dimension: int
    tendency: Callable[[np.ndarray], np.ndarray]
    internal_step: float
    assimilation_interval: float
    params: dict = field(default_factory=dict)
    process_noise_std: float = 0.0

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidModelError("model dimension must be positive")
        if self.internal_step <= 0 or self.assimilation_interval < 0:
            raise InvalidModelError("step sizes must be positive")


def lorenz63_model(sigma=L63_SIGMA, rho=L63_RHO, beta=L63_BETA,
                   assimilation_interval=0.5, internal_step=0.01):
    tendency = partial(lorenz63_tendency, sigma=sigma, rho=rho, beta=beta)
    return ModelSpec(3, tendency, internal_step, assimilation_interval,
                     params={"sigma": sigma, "rho": rho, "beta": beta})


def lorenz96_model(size=40, forcing=L96_FORCING,
                   assimilation_interval=0.2, internal_step=0.01):
    if size < 4:
        raise InvalidModelError("Lorenz '96 needs at least 4 state variables, got %d" % size)
    tendency = partial(lorenz96_tendency, forcing=forcing)
    return ModelSpec(size, tendency, internal_step, assimilation_interval,
                     params={"forcing": forcing})


def rk4_integrate(model, state, duration):
    """Integrate ``state`` for ``duration`` model time with classical RK4.

    The step count is ``round(duration / h)``, so the result is deterministic
    and the effective duration is the nearest multiple of the internal step.
    Accepts a single state ``(n,)`` or an ensemble ``(n, K)``.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    h = model.internal_step
    steps = int(round(duration / h))
    x = np.asarray(state, dtype=float).copy()
    f = model.tendency
    for k in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("state became non-finite during integration", step_index=k)
    return x


def observe_l63_distance(state, critical_point=None):
    """Distance from the L63 critical point, with its 1x3 Jacobian row.

    Raises NonDifferentiablePointError exactly at the critical point, where
    the distance has no gradient; callers may perturb the state instead.
    """
    c = lorenz63_critical_point() if critical_point is None else critical_point
    diff = np.asarray(state, dtype=float) - c
    dist = float(np.sqrt(np.dot(diff, diff)))
    if dist == 0.0:
        raise NonDifferentiablePointError("observation Jacobian undefined at the critical point")
    return dist, (diff / dist)[None, :]


def observe_l96_pointwise(state, omega=5):
    """Point-wise non-linear observation (x/2)[1 + (|x|/10)^(omega-1)] and its Jacobian."""
    if omega < 1:
        raise ValueError("omega must be >= 1")
    x = np.asarray(state, dtype=float)
    values = _l96_pointwise_op(x, omega)
    return values, np.diag(_l96_pointwise_diag(x, omega))


def _l63_distance_op(states, critical_point):
    diff = states - (critical_point[:, None] if states.ndim == 2 else critical_point)
    return np.sqrt(np.sum(diff * diff, axis=0))[None] if states.ndim == 2 \
        else np.atleast_1d(np.sqrt(np.dot(diff, diff)))


def _l63_distance_jac(states, critical_point):
    if states.ndim == 1:
        return observe_l63_distance(states, critical_point)[1]
    diff = states - critical_point[:, None]
    dist = np.sqrt(np.sum(diff * diff, axis=0))
    if np.any(dist == 0.0):
        raise NonDifferentiablePointError("observation Jacobian undefined at the critical point")
    return (diff / dist).T[:, None, :]


def _l96_pointwise_op(states, omega):
    return 0.5 * states * (1.0 + (np.abs(states) / 10.0) ** (omega - 1))


def _l96_pointwise_diag(states, omega):
    return 0.5 + omega * np.abs(states) ** (omega - 1) / (2.0 * 10.0 ** (omega - 1))


def _l96_pointwise_jac(states, omega):
    d = _l96_pointwise_diag(states, omega)
    if states.ndim == 1:
        return np.diag(d)
    n, k = states.shape
    jac = np.zeros((k, n, n))
    idx = np.arange(n)
    jac[:, idx, idx] = d.T
    return jac


def _linear_op(states, matrix):
    return matrix @ states


def _linear_jac(states, matrix):
    if states.ndim == 1:
        return matrix
    return np.broadcast_to(matrix, (states.shape[1],) + matrix.shape)


@dataclass(frozen=True)
class ObservationModel:
    """Observation operator, Jacobian, and a Gaussian-mixture noise model.

    The noise mixture has weights ``(M,)``, mean offsets ``(m, M)``, and
    covariances ``(M, m, m)``; the common single-Gaussian case is M=1 with a
    zero offset.
    """

    operator: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    noise_weights: np.ndarray
    noise_offsets: np.ndarray
    noise_covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.noise_weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("noise weights must be positive and sum to 1")
        for r in self.noise_covariances:
            r = np.asarray(r)
            if not np.allclose(r, r.T):
                raise ValueError("noise covariances must be symmetric")
            if np.any(np.linalg.eigvalsh(r) <= 0):
                raise ValueError("noise covariances must be positive definite")

    @property
    def obs_dimension(self):
        return self.noise_offsets.shape[0]

    @property
    def component_count(self):
        return self.noise_weights.shape[0]


def _single_gaussian_noise(m, covariance):
    r = np.atleast_2d(np.asarray(covariance, dtype=float))
    if r.shape != (m, m):
        raise ValueError("covariance shape %s does not match obs dimension %d" % (r.shape, m))
    return np.ones(1), np.zeros((m, 1)), r[None, :, :]


def l63_distance_observation(variance=1.0, sigma=L63_SIGMA, rho=L63_RHO, beta=L63_BETA):
    c = lorenz63_critical_point(sigma, rho, beta)
    w, off, cov = _single_gaussian_noise(1, np.array([[variance]]))
    return ObservationModel(partial(_l63_distance_op, critical_point=c),
                            partial(_l63_distance_jac, critical_point=c),
                            w, off, cov)


def l96_pointwise_observation(size=40, omega=5, variance=0.25):
    w, off, cov = _single_gaussian_noise(size, variance * np.eye(size))
    return ObservationModel(partial(_l96_pointwise_op, omega=omega),
                            partial(_l96_pointwise_jac, omega=omega),
                            w, off, cov)


def linear_observation(matrix, covariance):
    """Linear observation y = Hx with a single Gaussian noise component."""
    h = np.atleast_2d(np.asarray(matrix, dtype=float))
    w, off, cov = _single_gaussian_noise(h.shape[0], covariance)
    return ObservationModel(partial(_linear_op, matrix=h),
                            partial(_linear_jac, matrix=h),
                            w, off, cov)


def mixture_noise_observation(operator, jacobian, weights, offsets, covariances):
    """Observation model with an explicit M-component Gaussian noise mixture."""
    return ObservationModel(operator, jacobian,
                            np.asarray(weights, dtype=float),
                            np.asarray(offsets, dtype=float),
                            np.asarray(covariances, dtype=float))
