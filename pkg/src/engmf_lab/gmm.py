"""Numerically stable Gaussian-mixture primitives and the ensemble container.

All mixture weights live in log space end to end; covariances are carried as
lower-triangular Cholesky factors so log-determinants and sampling reuse one
factorization.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))


def log_sum_exp(values, axis=None):
    """log(sum(exp(values))) via the max-shift identity; never overflows.

    An all(-inf) input returns -inf.  Empty input is a contract error.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty collection")
    if axis is None:
        shift = np.max(v)
        if not np.isfinite(shift):
            return float(shift)
        return float(np.log(np.sum(np.exp(v - shift))) + shift)
    shift = np.max(v, axis=axis, keepdims=True)
    shift_safe = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - shift_safe), axis=axis)) + np.squeeze(shift_safe, axis=axis)
    return np.where(np.squeeze(np.isfinite(shift), axis=axis), out, np.squeeze(shift, axis=axis))


def normalize_log_weights(log_weights):
    """Shift log weights so the weights sum to one."""
    return np.asarray(log_weights, dtype=float) - log_sum_exp(log_weights)


@dataclass(frozen=True)
class Ensemble:
    """Weighted particle collection: particles are columns of an n x N matrix.

    Log weights are normalized on construction (log-sum-exp = 0).
    """

    particles: np.ndarray
    log_weights: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        if p.ndim != 2 or p.shape[1] < 1:
            raise ValueError("particles must be an n x N matrix with N >= 1")
        if not np.all(np.isfinite(p)):
            raise ValueError("particles must be finite")
        w = np.asarray(self.log_weights, dtype=float)
        if w.shape != (p.shape[1],):
            raise ValueError("log_weights must have one entry per particle")
        if not np.isfinite(log_sum_exp(w)):
            raise ValueError("log weights must have nonzero total mass")
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "log_weights", normalize_log_weights(w))

    @classmethod
    def uniform(cls, particles, time_index=0):
        particles = np.asarray(particles, dtype=float)
        n_members = particles.shape[1]
        return cls(particles, np.full(n_members, -np.log(n_members)), time_index)

    @property
    def dimension(self):
        return self.particles.shape[0]

    @property
    def size(self):
        return self.particles.shape[1]

    @property
    def weights(self):
        return np.exp(self.log_weights)


@dataclass(frozen=True)
class GaussianMixture:
    """Gaussian mixture with per-component lower-triangular covariance factors.

    ``means`` is n x C, ``cov_factors`` is C x n x n with L L^T the component
    covariance, and ``provenance`` optionally records the (particle, obs
    component) pair that produced each posterior component.
    """

    log_weights: np.ndarray
    means: np.ndarray
    cov_factors: np.ndarray
    provenance: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.log_weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        f = np.asarray(self.cov_factors, dtype=float)
        if m.ndim != 2 or w.shape != (m.shape[1],):
            raise ValueError("means must be n x C with one log weight per component")
        if f.shape != (m.shape[1], m.shape[0], m.shape[0]):
            raise ValueError("cov_factors must be C x n x n")
        diag = f[:, np.arange(f.shape[1]), np.arange(f.shape[1])]
        if np.any(diag <= 0):
            raise ValueError("covariance factors must have strictly positive diagonals")
        object.__setattr__(self, "log_weights", normalize_log_weights(w))
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "cov_factors", f)

    @property
    def count(self):
        return self.means.shape[1]

    @property
    def dimension(self):
        return self.means.shape[0]

    def component_log_densities(self, x):
        """Log density of each component at a single point x, shape (C,)."""
        x = np.asarray(x, dtype=float)
        n, count = self.means.shape
        out = np.empty(count)
        for c in range(count):
            factor = self.cov_factors[c]
            z = solve_triangular(factor, x - self.means[:, c], lower=True)
            out[c] = -0.5 * (n * LOG_2PI + np.dot(z, z)) - np.sum(np.log(np.diag(factor)))
        return out

    def log_determinants(self):
        """log det of each component covariance, shape (C,)."""
        diag = self.cov_factors[:, np.arange(self.dimension), np.arange(self.dimension)]
        return 2.0 * np.sum(np.log(diag), axis=1)


def mixture_log_density(gmm, x):
    """Log density of the mixture at a single point."""
    return log_sum_exp(gmm.log_weights + gmm.component_log_densities(x))


def categorical_draw(log_weights, rng, count):
    """Inverse-CDF categorical sampling, one uniform per draw."""
    cdf = np.cumsum(np.exp(normalize_log_weights(log_weights)))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(count), side="right")


def mixture_sample(gmm, rng, count):
    """Draw ``count`` iid samples from the mixture, returned as n x count."""
    if count < 1:
        raise ValueError("sample count must be >= 1")
    idx = categorical_draw(gmm.log_weights, rng, count)
    z = rng.standard_normal((count, gmm.dimension))
    shift = np.einsum("sij,sj->si", gmm.cov_factors[idx], z)
    return gmm.means[:, idx] + shift.T
