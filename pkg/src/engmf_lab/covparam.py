"""Parameterized kernel covariances B(theta), their derivatives, and priors.

Three families are supported:

* ``bandwidth``   B = beta^2 P                    (1 parameter)
* ``shrinkage``   B = beta^2 [gamma T + (1-gamma) P], T = diag(P)   (2 parameters)
* ``localized``   B = beta^2 (rho(r) o P)          (2 parameters)

Optimizers work in an unconstrained zeta space: beta = zeta^2 (so
beta^2 = zeta^4), gamma = tanh(zeta) clamped into (1e-6, 1-1e-6), and
r = zeta^2.  The bandwidth carries a Rayleigh prior whose scale is
Silverman's rule; the other parameters are flat.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import InsufficientEnsembleError, SingularKernelError

BANDWIDTH = "bandwidth"
SHRINKAGE = "shrinkage"
LOCALIZED = "localized"

GAMMA_CLAMP = 1e-6
_JITTER_SCHEDULE = (0.0, 1e-10, 1e-8)


@dataclass(frozen=True)
class KernelFamily:
    """Which covariance parameterization is active, plus its fixed metadata."""

    variant: str
    distance_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.variant not in (BANDWIDTH, SHRINKAGE, LOCALIZED):
            raise ValueError("unknown kernel family %r" % self.variant)
        if self.variant == LOCALIZED:
            d = self.distance_matrix
            if d is None:
                raise ValueError("localized family needs a distance matrix")
            d = np.asarray(d, dtype=float)
            if not np.allclose(d, d.T) or np.any(np.diag(d) != 0.0) or np.any(d < 0):
                raise ValueError("distances must be symmetric, nonnegative, zero on the diagonal")
            object.__setattr__(self, "distance_matrix", d)

    @property
    def parameter_count(self):
        return 1 if self.variant == BANDWIDTH else 2

    @property
    def parameter_names(self):
        if self.variant == BANDWIDTH:
            return ("beta2",)
        if self.variant == SHRINKAGE:
            return ("beta2", "gamma")
        return ("beta2", "radius")


def bandwidth_family():
    return KernelFamily(BANDWIDTH)


def shrinkage_family():
    return KernelFamily(SHRINKAGE)


def localized_family(distance_matrix):
    return KernelFamily(LOCALIZED, distance_matrix)


def cyclic_distance_matrix(size):
    """Grid-index distances on a ring: d(l,q) = min(|l-q|, n-|l-q|)."""
    idx = np.arange(size)
    gap = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(gap, size - gap).astype(float)


@dataclass(frozen=True)
class ThetaVector:
    """Unconstrained optimizer-space parameters for a kernel family."""

    zeta: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if not np.all(np.isfinite(z)):
            raise ValueError("zeta must be finite")
        object.__setattr__(self, "zeta", z)


def theta_from_physical(family, beta2, gamma=None, radius=None):
    """Build the zeta vector realizing the given physical parameters."""
    if beta2 <= 0:
        raise ValueError("beta2 must be positive")
    zeta = [float(beta2) ** 0.25]
    if family.variant == SHRINKAGE:
        if gamma is None or not (0.0 < gamma < 1.0):
            raise ValueError("shrinkage needs gamma in (0, 1)")
        zeta.append(np.arctanh(gamma))
    elif family.variant == LOCALIZED:
        if radius is None or radius <= 0:
            raise ValueError("localized needs a positive radius")
        zeta.append(np.sqrt(radius))
    return ThetaVector(np.array(zeta))


def physical_parameters(family, theta):
    """Map zeta to the physical parameters {beta2[, gamma | radius]}."""
    z = theta.zeta
    if z.shape != (family.parameter_count,):
        raise ValueError("theta has %d parameters, family %r needs %d"
                         % (z.shape[0], family.variant, family.parameter_count))
    out = {"beta2": z[0] ** 4}
    if family.variant == SHRINKAGE:
        out["gamma"] = float(np.clip(np.tanh(z[1]), GAMMA_CLAMP, 1.0 - GAMMA_CLAMP))
    elif family.variant == LOCALIZED:
        out["radius"] = z[1] ** 2
    return out


def _physical_derivatives(family, theta):
    """d(physical)/d(zeta) for each parameter, as a vector."""
    z = theta.zeta
    grads = [4.0 * z[0] ** 3]
    if family.variant == SHRINKAGE:
        t = np.tanh(z[1])
        grads.append(0.0 if not (GAMMA_CLAMP < t < 1.0 - GAMMA_CLAMP) else 1.0 - t * t)
    elif family.variant == LOCALIZED:
        grads.append(2.0 * z[1])
    return np.array(grads)


@dataclass(frozen=True)
class AssembledKernel:
    """A realized kernel covariance: matrix, factor, log det, and dB/dzeta.

    ``d_scales[t]`` is set when dB/dzeta_t is exactly scale * B (true for the
    bandwidth direction of every family, unless jitter was added), letting
    gradient code skip the dense quadratic form for that parameter.
    """

    matrix: np.ndarray
    factor: np.ndarray
    log_det: float
    d_matrix_d_zeta: np.ndarray
    d_scales: tuple = ()


def empirical_covariance(ens):
    """Unweighted sample covariance (1/(N-1)) X (I - 11^T/N) X^T."""
    if ens.size < 2:
        raise InsufficientEnsembleError("empirical covariance needs N >= 2 particles")
    centered = ens.particles - ens.particles.mean(axis=1, keepdims=True)
    return centered @ centered.T / (ens.size - 1)


def silverman_bandwidth(n_members, dimension):
    """Silverman's rule of thumb for the squared bandwidth."""
    if n_members < 1 or dimension < 1:
        raise ValueError("need positive ensemble size and dimension")
    return (4.0 / (n_members * (dimension + 2.0))) ** (2.0 / (dimension + 4.0))


def rblw_shrinkage(sample_cov, target, n_members):
    """Rao-Blackwellized Ledoit-Wolf shrinkage factor, capped at 1.

    Uses tr C = tr(T^-1 P) and tr C^2 = tr((T^-1 P)^2), which equal the
    traces of C = T^-1/2 P T^-1/2 without forming the square root.
    """
    if n_members < 3:
        raise InsufficientEnsembleError("RBLW estimate needs N >= 3")
    p = np.asarray(sample_cov, dtype=float)
    n = p.shape[0]
    a = np.linalg.solve(np.asarray(target, dtype=float), p)
    tr_c = np.trace(a)
    tr_c2 = np.sum(a * a.T)
    if n == 1:
        return 1.0
    u_hat = (n * tr_c2 / tr_c**2 - 1.0) / (n - 1.0)
    if u_hat <= 0.0:
        return 1.0
    lead = (n_members - 2.0) / (n_members * (n_members + 2.0))
    slope = ((n + 1.0) * n_members - 2.0) / (n_members * (n_members + 2.0) * (n - 1.0) * u_hat)
    return min(lead + slope, 1.0)


def localization_weights(distance_matrix, radius):
    """Gaussian taper exp(-d^2 / (2 r^2)); unit diagonal, entries in (0, 1]."""
    if radius <= 0:
        raise ValueError("localization radius must be positive")
    d = np.asarray(distance_matrix, dtype=float)
    return np.exp(-0.5 * (d / radius) ** 2)


def _factor_with_jitter(matrix):
    """Cholesky with escalating diagonal jitter.

    Returns (factor, possibly jittered matrix, jitter epsilon used).
    """
    scale = float(np.mean(np.diag(matrix)))
    for eps in _JITTER_SCHEDULE:
        candidate = matrix if eps == 0.0 else matrix + eps * scale * np.eye(matrix.shape[0])
        try:
            return cholesky(candidate, lower=True), candidate, eps
        except np.linalg.LinAlgError:
            continue
    raise SingularKernelError("kernel covariance is singular after jitter escalation")


def assemble_kernel(family, theta, ens):
    """Realize B(theta) for the ensemble, with factor, log det, and dB/dzeta."""
    p = empirical_covariance(ens)
    phys = physical_parameters(family, theta)
    dphys = _physical_derivatives(family, theta)
    beta2 = phys["beta2"]

    if family.variant == BANDWIDTH:
        b = beta2 * p
        d_physical = [p]
    elif family.variant == SHRINKAGE:
        target = np.diag(np.diag(p))
        blend = phys["gamma"] * target + (1.0 - phys["gamma"]) * p
        b = beta2 * blend
        d_physical = [blend, beta2 * (target - p)]
    else:
        d = family.distance_matrix
        if d.shape != p.shape:
            raise ValueError("distance matrix shape %s does not match state dimension %d"
                             % (d.shape, p.shape[0]))
        radius = phys["radius"]
        taper = localization_weights(d, radius)
        tapered = taper * p
        b = beta2 * tapered
        d_physical = [tapered, beta2 * (d**2 / radius**3) * tapered]

    db_dzeta = np.stack([dp * dz for dp, dz in zip(d_physical, dphys)])
    try:
        factor, b, jitter = _factor_with_jitter(b)
    except SingularKernelError:
        raise SingularKernelError(
            "kernel covariance singular (degenerate ensemble for the %s family)" % family.variant)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
    # the bandwidth direction satisfies dB/dzeta_0 = (dbeta2/dzeta / beta2) B
    # exactly, unless jitter shifted B off the parameterized surface
    d_scales = [None] * family.parameter_count
    if jitter == 0.0:
        d_scales[0] = float(dphys[0] / beta2)
    return AssembledKernel(b, factor, log_det, db_dzeta, tuple(d_scales))


def log_parameter_prior(family, theta, n_members, dimension):
    """Log prior over theta and its zeta-space gradient.

    The bandwidth follows a Rayleigh distribution in beta with scale set by
    Silverman's rule (mode beta_G / sqrt(2)); shrinkage and radius are flat.
    """
    beta_g = np.sqrt(silverman_bandwidth(n_members, dimension))
    zeta_b = theta.zeta[0]
    beta = zeta_b**2
    if beta <= 0:
        raise ValueError("beta must be positive; got zeta_beta = 0")
    log_p = np.log(2.0) - 2.0 * np.log(beta_g) + np.log(beta) - beta**2 / beta_g**2
    d_log_p_d_beta = 1.0 / beta - 2.0 * beta / beta_g**2
    grad = np.zeros(family.parameter_count)
    grad[0] = d_log_p_d_beta * 2.0 * zeta_b
    return float(log_p), grad


def kernel_whiten(kernel, vectors):
    """Solve L z = v for column vectors; ||z||^2 is the Mahalanobis form."""
    return solve_triangular(kernel.factor, vectors, lower=True)
