"""Online EM fitting of kernel-covariance parameters with sub-sampled Newton.

The outer loop re-forms the candidate posterior at the current parameters;
the inner loop takes Newton (or gradient-ascent fallback) steps on a Monte
Carlo estimate of the expected complete-data log likelihood, with the
gradient and Hessian estimated from independent sample batches.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .covparam import (assemble_kernel, log_parameter_prior, physical_parameters,
                       silverman_bandwidth, theta_from_physical, ThetaVector)
from .engmf import engmf_analysis, gmm_resample
from .errors import SingularKernelError
from .gmm import LOG_2PI, log_sum_exp

_HESSIAN_FD_STEP = 1e-4


@dataclass(frozen=True)
class EMConfig:
    """Loop counts and step-size controls for the EM / Newton iteration."""

    outer_loops: int
    inner_loops: int = 1
    batch_size: int = 100
    learning_rate: float = 1.0
    gradient_clip: float = 1.0

    def __post_init__(self):
        if self.outer_loops < 0 or self.inner_loops < 1 or self.batch_size < 2:
            raise ValueError("need outer >= 0, inner >= 1, batch >= 2")
        if self.learning_rate <= 0 or self.gradient_clip <= 0:
            raise ValueError("learning rate and clip must be positive")


@dataclass
class FitDiagnostics:
    """Per-iteration record of the EM fit; trajectory has M*P + 1 entries."""

    theta_trajectory: list = field(default_factory=list)
    loss_estimates: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    gradient_fallbacks: list = field(default_factory=list)
    clipped_steps: list = field(default_factory=list)
    aborted: bool = False
    reset_to_default: bool = False


def _pair_differences(ens, batch):
    """x_s - x_j for every (sample, particle) pair, flattened to (n, S*N)."""
    delta = batch[:, :, None] - ens.particles[:, None, :]
    return delta.reshape(ens.dimension, -1), batch.shape[1]


def _density_pieces(kernel, ens, delta_flat, n_samples):
    """Responsibilities, whitened differences, squared Mahalanobis distances,
    and mixture log densities.

    All mixture components share the kernel covariance, so the factor is
    inverted once and applied to the whole (n, S*N) difference slab.
    """
    n, n_members = ens.particles.shape
    inv_factor = solve_triangular(kernel.factor, np.eye(n), lower=True)
    z = inv_factor @ delta_flat
    sq = np.sum(z * z, axis=0).reshape(n_samples, n_members)
    log_dens = -0.5 * (n * LOG_2PI + kernel.log_det) - 0.5 * sq
    log_post = ens.log_weights[None, :] + log_dens
    log_mix = log_sum_exp(log_post, axis=1)
    resp = np.exp(log_post - log_mix[:, None])
    return resp, z, sq, inv_factor, log_mix


def mixture_responsibilities(kernel, ens, batch):
    """Posterior component memberships of each sample under the prior mixture.

    Returns (responsibilities (S, N), whitened differences (n, S, N),
    per-sample mixture log densities (S,)).
    """
    delta_flat, n_samples = _pair_differences(ens, batch)
    resp, z, _, _, log_mix = _density_pieces(kernel, ens, delta_flat, n_samples)
    return resp, z.reshape(ens.dimension, n_samples, ens.size), log_mix


def _gradient_from_delta(kernel, ens, delta_flat, n_samples):
    n, n_members = ens.particles.shape
    resp, z, sq, inv_factor, log_mix = _density_pieces(kernel, ens, delta_flat, n_samples)
    param_count = len(kernel.d_matrix_d_zeta)
    scales = kernel.d_scales if len(kernel.d_scales) == param_count else (None,) * param_count

    a = b_inv = None
    grad = np.empty(param_count)
    for t, db in enumerate(kernel.d_matrix_d_zeta):
        if scales[t] is not None:
            # dB = scale * B collapses the quadratic form to scale * ||z||^2
            trace_term = scales[t] * n
            quad = scales[t] * sq
        else:
            if a is None:
                a = inv_factor.T @ z           # B^-1 (x_s - x_j), (n, S*N)
                b_inv = inv_factor.T @ inv_factor
            trace_term = float(np.sum(b_inv * db))   # tr(B^-1 dB), both symmetric
            quad = np.sum(a * (db @ a), axis=0).reshape(n_samples, n_members)
        grad[t] = np.mean(np.sum(resp * (0.5 * quad - 0.5 * trace_term), axis=1))
    return grad, float(np.mean(log_mix))


def mixture_loglik_gradient(kernel, ens, batch):
    """Batch-mean gradient of log p(x | theta) w.r.t. each kernel parameter.

    Per sample and mixture component j the contribution is
    resp_j [ -1/2 tr(B^-1 dB) + 1/2 d^T B^-1 dB B^-1 d ], d = x - x_j.
    Returns (gradient, batch-mean mixture log density).
    """
    delta_flat, n_samples = _pair_differences(ens, batch)
    return _gradient_from_delta(kernel, ens, delta_flat, n_samples)


def _batch_gradient(theta, batch, family, ens, _delta=None):
    """Analytic zeta-gradient of the MC loss on one batch, plus the MC loss."""
    kernel = assemble_kernel(family, theta, ens)
    delta_flat, n_samples = _delta if _delta is not None else _pair_differences(ens, batch)
    grad, mean_loglik = _gradient_from_delta(kernel, ens, delta_flat, n_samples)
    log_prior, prior_grad = log_parameter_prior(family, theta, ens.size, ens.dimension)
    return grad + prior_grad, mean_loglik + log_prior


def mc_loss(theta, batch, family, ens):
    """Monte Carlo estimate of the EM loss on a batch (mixture + prior terms)."""
    kernel = assemble_kernel(family, theta, ens)
    _, _, log_mix = mixture_responsibilities(kernel, ens, batch)
    log_prior, _ = log_parameter_prior(family, theta, ens.size, ens.dimension)
    return float(np.mean(log_mix)) + log_prior


def _fd_hessian(theta, hess_batch, family, ens):
    """Central finite differences of the analytic gradient on one batch."""
    p = family.parameter_count
    delta = _pair_differences(ens, hess_batch)
    hess = np.empty((p, p))
    for t in range(p):
        step = np.zeros(p)
        step[t] = _HESSIAN_FD_STEP
        g_plus, _ = _batch_gradient(ThetaVector(theta.zeta + step), hess_batch,
                                    family, ens, _delta=delta)
        g_minus, _ = _batch_gradient(ThetaVector(theta.zeta - step), hess_batch,
                                     family, ens, _delta=delta)
        hess[:, t] = (g_plus - g_minus) / (2.0 * _HESSIAN_FD_STEP)
    return 0.5 * (hess + hess.T)


def mc_loss_derivatives(theta, grad_batch, hess_batch, family, ens):
    """Gradient and Hessian estimates of the EM loss from independent batches.

    The gradient is analytic on ``grad_batch``; the Hessian is a central
    finite difference of the analytic gradient evaluated on ``hess_batch``
    only, then symmetrized.
    """
    grad, _ = _batch_gradient(theta, grad_batch, family, ens)
    return grad, _fd_hessian(theta, hess_batch, family, ens)


def newton_or_gradient_step(grad, hess, learning_rate, clip):
    """Ascent step: Newton when the Hessian is negative definite, else gradient.

    A non-finite Newton solve (numerically singular curvature) also falls
    back to the gradient step.  Returns (step, used_gradient_fallback,
    was_clipped).
    """
    negative_definite = bool(np.all(np.linalg.eigvalsh(hess) < 0.0))
    step = None
    if negative_definite:
        step = -learning_rate * np.linalg.solve(hess, grad)
        if not np.all(np.isfinite(step)):
            negative_definite = False
            step = None
    if step is None:
        step = learning_rate * grad
    norm = float(np.linalg.norm(step))
    clipped = norm > clip
    if clipped:
        step = step * (clip / norm)
    return step, not negative_definite, clipped


def em_fit(ens, obs, y, family, theta0, cfg, rng):
    """Fit kernel parameters by EM with sub-sampled Newton inner steps.

    Each outer loop freezes the candidate posterior at the current theta;
    each inner step draws two independent batches from it for the gradient
    and Hessian.  Non-finite derivatives abort the fit, returning the last
    finite theta with the diagnostic flag set.
    """
    theta = theta0
    diag = FitDiagnostics(theta_trajectory=[theta])
    total = cfg.outer_loops * cfg.inner_loops
    for _ in range(cfg.outer_loops):
        kernel = assemble_kernel(family, theta, ens)
        candidate = engmf_analysis(ens, kernel, obs, y)
        for _ in range(cfg.inner_loops):
            grad_batch = gmm_resample(candidate, rng, cfg.batch_size).particles
            hess_batch = gmm_resample(candidate, rng, cfg.batch_size).particles
            grad, loss = _batch_gradient(theta, grad_batch, family, ens)
            hess = _fd_hessian(theta, hess_batch, family, ens)
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess)) and np.isfinite(loss)):
                diag.aborted = True
                _pad_trajectory(diag, total)
                return theta, diag
            step, fallback, clipped = newton_or_gradient_step(
                grad, hess, cfg.learning_rate, cfg.gradient_clip)
            theta = ThetaVector(theta.zeta + step)
            diag.theta_trajectory.append(theta)
            diag.loss_estimates.append(loss)
            diag.step_norms.append(float(np.linalg.norm(step)))
            diag.gradient_fallbacks.append(fallback)
            diag.clipped_steps.append(clipped)
    return theta, diag


def _pad_trajectory(diag, total):
    while len(diag.theta_trajectory) < total + 1:
        diag.theta_trajectory.append(diag.theta_trajectory[-1])


def default_theta(family, n_members, dimension, theta_prev=None):
    """Silverman-bandwidth theta; gamma/radius carried over from theta_prev."""
    beta2 = silverman_bandwidth(n_members, dimension)
    gamma, radius = 0.5, 4.0
    if theta_prev is not None:
        phys = physical_parameters(family, theta_prev)
        gamma = phys.get("gamma", gamma)
        radius = phys.get("radius", radius)
    return theta_from_physical(family, beta2, gamma=gamma, radius=radius)


def aengmf_step(ens, obs, y, family, theta_prev, cfg, rng):
    """One adaptive EnGMF assimilation: warm-started EM fit, final analysis,
    and a fresh N-particle resample.

    Returns (new ensemble, fitted theta, final analysis, fit diagnostics).
    On a singular kernel the whole step is retried once with the bandwidth
    reset to Silverman's value (flagged in the diagnostics).
    """
    try:
        theta, diag = em_fit(ens, obs, y, family, theta_prev, cfg, rng)
        kernel = assemble_kernel(family, theta, ens)
    except SingularKernelError:
        theta0 = default_theta(family, ens.size, ens.dimension, theta_prev)
        theta, diag = em_fit(ens, obs, y, family, theta0, cfg, rng)
        diag.reset_to_default = True
        kernel = assemble_kernel(family, theta, ens)
    analysis = engmf_analysis(ens, kernel, obs, y)
    new_ens = gmm_resample(analysis, rng, ens.size, time_index=ens.time_index)
    return new_ens, theta, analysis, diag
