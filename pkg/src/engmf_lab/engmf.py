"""The EnGMF analysis step: prior particles -> posterior Gaussian mixture.

The posterior has one component per (particle j, observation component k)
pair, laid out in (j, k) lexicographic order so that log-weight
normalization is reproducible regardless of how the per-component work is
scheduled.
"""

from dataclasses import dataclass

import numpy as np

from .covparam import _factor_with_jitter
from .errors import ObservationDegeneracyError
from .gmm import LOG_2PI, Ensemble, GaussianMixture, mixture_sample, normalize_log_weights


@dataclass(frozen=True)
class AnalysisResult:
    """Posterior mixture plus per-component gain and innovation diagnostics.

    ``gains`` is (C, n, m); ``residuals`` holds y_k - H(x_j) per component,
    (C, m); ``log_norms`` the Gaussian normalization constants
    -1/2 log|2 pi S| entering the weights.
    """

    posterior: GaussianMixture
    gains: np.ndarray
    residuals: np.ndarray
    log_norms: np.ndarray


def _batched_cholesky(matrices):
    """Stacked Cholesky with the covparam jitter policy on failures."""
    try:
        return np.linalg.cholesky(matrices), matrices
    except np.linalg.LinAlgError:
        factors = np.empty_like(matrices)
        out = matrices.copy()
        for j in range(matrices.shape[0]):
            factors[j], out[j], _ = _factor_with_jitter(matrices[j])
        return factors, out


def engmf_analysis(ens, kernel, obs, y):
    """One EnGMF update: Kalman-style component updates with mixture weights.

    Per particle j and observation component k: S = H_j B H_j^T + R_k,
    G = B H_j^T S^-1, mean x_j - G (H(x_j) - y_k), covariance (I - G H_j) B
    symmetrized, and log weight log u_j + log v_k + log N(y_k; H(x_j), S).
    """
    b = kernel.matrix
    n, n_members = ens.particles.shape
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = obs.obs_dimension

    hx = np.asarray(obs.operator(ens.particles), dtype=float)        # (m, N)
    jac = np.asarray(obs.jacobian(ens.particles), dtype=float)       # (N, m, n)
    if hx.shape != (m, n_members) or jac.shape != (n_members, m, n):
        raise ValueError("observation operator/jacobian returned unexpected shapes")

    bht = np.einsum("ij,amj->aim", b, jac)                           # (N, n, m) = B H^T
    hb = bht.transpose(0, 2, 1)                                      # (N, m, n) = H B

    mix_count = obs.component_count
    means = np.empty((n_members, mix_count, n))
    covs = np.empty((n_members, mix_count, n, n))
    gains = np.empty((n_members, mix_count, n, m))
    residuals = np.empty((n_members, mix_count, m))
    log_norms = np.empty((n_members, mix_count))
    log_w = np.empty((n_members, mix_count))

    for k in range(mix_count):
        s = jac @ bht + obs.noise_covariances[k]                     # (N, m, m)
        s = 0.5 * (s + s.transpose(0, 2, 1))
        try:
            chol_s = np.linalg.cholesky(s)
        except np.linalg.LinAlgError as exc:
            raise ObservationDegeneracyError("innovation covariance not positive definite") from exc

        gain = np.linalg.solve(s, hb).transpose(0, 2, 1)             # (N, n, m)
        resid = (y + obs.noise_offsets[:, k])[None, :] - hx.T        # (N, m)
        means[:, k] = ens.particles.T + (gain @ resid[:, :, None])[:, :, 0]

        cov = b[None] - gain @ hb
        covs[:, k] = 0.5 * (cov + cov.transpose(0, 2, 1))
        gains[:, k] = gain
        residuals[:, k] = resid

        white = np.linalg.solve(chol_s, resid[:, :, None])[:, :, 0]
        log_det_s = 2.0 * np.sum(np.log(np.diagonal(chol_s, axis1=1, axis2=2)), axis=1)
        log_norms[:, k] = -0.5 * (m * LOG_2PI + log_det_s)
        log_w[:, k] = (ens.log_weights + np.log(obs.noise_weights[k])
                       + log_norms[:, k] - 0.5 * np.sum(white**2, axis=1))

    count = n_members * mix_count
    factors, _ = _batched_cholesky(covs.reshape(count, n, n))
    provenance = np.stack(np.meshgrid(np.arange(n_members), np.arange(mix_count),
                                      indexing="ij"), axis=-1).reshape(count, 2)
    posterior = GaussianMixture(normalize_log_weights(log_w.reshape(count)),
                                means.reshape(count, n).T, factors, provenance)
    return AnalysisResult(posterior, gains.reshape(count, n, m),
                          residuals.reshape(count, m), log_norms.reshape(count))


def gmm_resample(result, rng, count, time_index=0):
    """Draw a fresh equally-weighted ensemble from the posterior mixture."""
    if count < 1:
        raise ValueError("resample count must be >= 1")
    particles = mixture_sample(result.posterior, rng, count)
    return Ensemble.uniform(particles, time_index)


def posterior_mean(result):
    """Weighted mean of the posterior mixture (the filter's state estimate)."""
    return result.posterior.means @ np.exp(result.posterior.log_weights)
