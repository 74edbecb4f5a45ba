"""Reference filters: stochastic (perturbed-observation) EnKF and bootstrap SIR.

Both operate on an already-propagated ensemble and return a fresh ensemble
with uniform weights; the EnKF optionally tapers the background covariance
with a localization matrix.
"""

import numpy as np

from .covparam import empirical_covariance
from .errors import DegenerateLikelihoodError, ObservationDegeneracyError
from .gmm import LOG_2PI, Ensemble, log_sum_exp, normalize_log_weights


def enkf_step(ens, obs, y, rng, localization=None):
    """Perturbed-observation EnKF update.

    The gain comes from the sample cross covariances of the particles with
    their (generally nonlinear) mapped observations, so no Jacobian is
    needed.  ``localization`` tapers both cross and observation-space
    covariances element-wise; for non-collocated geometries pass the taper
    already mapped to observation space.
    """
    if obs.component_count != 1:
        raise ValueError("EnKF supports a single observation noise component")
    if ens.size < 2:
        raise ValueError("EnKF needs at least two ensemble members")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    hx = np.asarray(obs.operator(ens.particles), dtype=float)
    anomalies = ens.particles - ens.particles.mean(axis=1, keepdims=True)
    obs_anomalies = hx - hx.mean(axis=1, keepdims=True)
    cross = anomalies @ obs_anomalies.T / (ens.size - 1)
    obs_cov = obs_anomalies @ obs_anomalies.T / (ens.size - 1)
    if localization is not None:
        cross = localization * cross
        obs_cov = localization * obs_cov
    r = obs.noise_covariances[0]

    try:
        gain = np.linalg.solve(obs_cov + r, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise ObservationDegeneracyError("innovation covariance not invertible") from exc

    noise = np.linalg.cholesky(r) @ rng.standard_normal((r.shape[0], ens.size))
    perturbed = y[:, None] + obs.noise_offsets[:, 0:1] + noise
    updated = ens.particles + gain @ (perturbed - hx)
    return Ensemble.uniform(updated, ens.time_index)


def systematic_resample(weights, rng):
    """Systematic resampling indices; expected copy count of j is N w_j."""
    n_members = weights.shape[0]
    positions = (rng.random() + np.arange(n_members)) / n_members
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def sir_step(ens, obs, y, rng, rejuvenation=0.0):
    """Bootstrap particle filter update: reweight by likelihood, then resample.

    With deterministic dynamics, resampled duplicates never separate again, so
    ``rejuvenation`` > 0 adds N(0, rejuvenation^2 P) noise to the resampled
    particles (P the pre-update empirical covariance); zero keeps the pure
    bootstrap behavior.
    """
    if obs.component_count != 1:
        raise ValueError("SIR supports a single observation noise component")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    hx = np.asarray(obs.operator(ens.particles), dtype=float)
    r = obs.noise_covariances[0]
    chol_r = np.linalg.cholesky(r)
    resid = (y + obs.noise_offsets[:, 0])[:, None] - hx
    white = np.linalg.solve(chol_r, resid) if r.shape[0] > 1 else resid / chol_r[0, 0]
    log_det = 2.0 * np.sum(np.log(np.diag(chol_r)))
    with np.errstate(over="ignore"):
        # an overflowing quadratic legitimately drives the log weight to -inf
        log_lik = -0.5 * (r.shape[0] * LOG_2PI + log_det + np.sum(white**2, axis=0))

    log_w = ens.log_weights + log_lik
    if log_sum_exp(log_w) == -np.inf:
        raise DegenerateLikelihoodError("all particles received zero likelihood")
    idx = systematic_resample(np.exp(normalize_log_weights(log_w)), rng)
    particles = ens.particles[:, idx]
    if rejuvenation > 0.0:
        factor = np.linalg.cholesky(
            empirical_covariance(ens) + 1e-12 * np.eye(ens.dimension))
        particles = particles + rejuvenation * (
            factor @ rng.standard_normal(particles.shape))
    return Ensemble.uniform(particles, ens.time_index)
