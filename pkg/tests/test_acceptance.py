"""Acceptance suite: every benchmark criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail line
per criterion.  The reduced-scale reproductions (criteria 3-6) use 2000- or
1100-step twin experiments over two seeds and take tens of minutes total;
everything else is fast.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from engmf_lab.covparam import (AssembledKernel, bandwidth_family, cyclic_distance_matrix,
                                localized_family, shrinkage_family, silverman_bandwidth,
                                theta_from_physical, ThetaVector)
from engmf_lab.adapt import mc_loss, mc_loss_derivatives
from engmf_lab.dynamics import linear_observation
from engmf_lab.engmf import engmf_analysis, gmm_resample
from engmf_lab.gmm import Ensemble
from engmf_lab.harness import (EMSettings, ExperimentConfig, FilterSpec,
                               run_filter_trajectory, run_sweep)

SEEDS = (1, 2)


def _report(criterion, detail, ok):
    print(f"criterion {criterion}: {detail} -> {'PASS' if ok else 'FAIL'}")
    assert ok, detail


def _mean_rmse(cfg, method, n):
    recs = [run_filter_trajectory(cfg, method, n, seed) for seed in SEEDS]
    assert all(not r.diverged for r in recs), f"{method} N={n} diverged"
    values = [r.rmse for r in recs]
    beta2 = [r.theta_summary.get("beta2") for r in recs]
    return float(np.mean(values)), values, beta2


def l63_config(**filters):
    return ExperimentConfig(
        model_name="lorenz63", assimilation_interval=0.5,
        obs_name="l63_distance", obs_variance=1.0,
        steps=2000, spinup=500, seeds=SEEDS, particles=(25,),
        filters=filters,
        em=EMSettings(outer=5, inner=1, batch=0, alpha=1.0, clip=1.0))


@pytest.fixture(scope="module")
def l63_grid():
    """Shared L63 runs for criteria 4, 5, and 7: mean RMSE and fitted beta^2."""
    cfg = l63_config(AEnGMF=FilterSpec("aengmf", "bandwidth"),
                     EnGMF=FilterSpec("engmf", "bandwidth"),
                     EnKF=FilterSpec("enkf"))
    out = {}
    for method, sizes in (("AEnGMF", (25, 50, 100, 400)),
                          ("EnGMF", (25, 50, 100)),
                          ("EnKF", (25, 50, 100))):
        for n in sizes:
            out[(method, n)] = _mean_rmse(cfg, method, n)
    return out


class TestCriterion1Oracle:
    def test_criterion_1_linear_gaussian_exactness(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        # scalar case plus a general matrix case
        cases = []
        cases.append((np.zeros(1), np.eye(1), np.array([[1.0]]), np.eye(1), np.array([1.0])))
        a = rng.standard_normal((4, 4))
        cases.append((rng.standard_normal(4), a @ a.T + 4 * np.eye(4),
                      rng.standard_normal((2, 4)), np.diag([0.5, 2.0]),
                      rng.standard_normal(2)))
        for mean, cov, h, r, y in cases:
            factor = np.linalg.cholesky(cov)
            kernel = AssembledKernel(cov, factor,
                                     2 * np.sum(np.log(np.diag(factor))),
                                     np.zeros((1,) + cov.shape))
            ens = Ensemble(mean[:, None], np.array([0.0]))
            res = engmf_analysis(ens, kernel, linear_observation(h, r), y)
            s = h @ cov @ h.T + r
            gain = cov @ h.T @ np.linalg.inv(s)
            k_mean = mean + gain @ (y - h @ mean)
            k_cov = (np.eye(cov.shape[0]) - gain @ h) @ cov
            post_factor = res.posterior.cov_factors[0]
            worst = max(worst,
                        float(np.max(np.abs(res.posterior.means[:, 0] - k_mean))),
                        float(np.max(np.abs(post_factor @ post_factor.T - k_cov))))
        _report(1, f"max |EnGMF - Kalman| = {worst:.2e} (tol 1e-10)", worst < 1e-10)


class TestCriterion2Gradients:
    def test_criterion_2_gradient_suite(self):
        rng = np.random.default_rng(99)
        h = 1e-5
        families = [
            (bandwidth_family(), lambda: np.array([rng.uniform(0.6, 1.2)])),
            (shrinkage_family(), lambda: np.array([rng.uniform(0.6, 1.2),
                                                   rng.uniform(-1.5, 1.5)])),
            (localized_family(cyclic_distance_matrix(4)),
             lambda: np.array([rng.uniform(0.6, 1.2), rng.uniform(0.8, 2.0)])),
        ]
        worst = 0.0
        for family, draw in families:
            for _ in range(20):
                ens = Ensemble.uniform(2.0 * rng.standard_normal((4, 12)))
                zeta = draw()
                batch = ens.particles[:, rng.integers(0, 12, size=40)] \
                    + 0.5 * rng.standard_normal((4, 40))
                grad, _ = mc_loss_derivatives(ThetaVector(zeta), batch, batch, family, ens)
                fd = np.empty_like(zeta)
                for t in range(zeta.shape[0]):
                    e = np.zeros_like(zeta)
                    e[t] = h
                    fd[t] = (mc_loss(ThetaVector(zeta + e), batch, family, ens)
                             - mc_loss(ThetaVector(zeta - e), batch, family, ens)) / (2 * h)
                rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8)
                worst = max(worst, float(rel))
        _report(2, f"worst relative gradient error = {worst:.2e} (tol 1e-5)", worst < 1e-5)


class TestCriterion3Baselines:
    def test_criterion_3_l63_baseline_bands(self):
        cfg = l63_config(SIR=FilterSpec("sir"), EnKF=FilterSpec("enkf"))
        sir_mean, sir_vals, _ = _mean_rmse(cfg, "SIR", 1000)
        enkf_mean, enkf_vals, _ = _mean_rmse(cfg, "EnKF", 1000)
        detail = (f"SIR mean {sir_mean:.3f} (target 2.82 +- 0.4, runs {sir_vals}); "
                  f"EnKF mean {enkf_mean:.3f} (target 4.71 +- 0.6, runs {enkf_vals})")
        _report(3, detail, abs(sir_mean - 2.82) <= 0.4 and abs(enkf_mean - 4.71) <= 0.6)


class TestCriterion4Ordering:
    def test_criterion_4_l63_ordering(self, l63_grid):
        lines, ok = [], True
        for n in (25, 50, 100):
            adaptive = l63_grid[("AEnGMF", n)][0]
            classic = l63_grid[("EnGMF", n)][0]
            enkf = l63_grid[("EnKF", n)][0]
            ok = ok and adaptive < classic and adaptive < enkf
            lines.append(f"N={n}: AEnGMF {adaptive:.3f} < EnGMF {classic:.3f} "
                         f"and < EnKF {enkf:.3f}")
        _report(4, "; ".join(lines), ok)


class TestCriterion5Convergence:
    def test_criterion_5_aengmf_convergence(self, l63_grid):
        means, spreads = [], []
        for n in (25, 100, 400):
            mean, values, _ = l63_grid[("AEnGMF", n)]
            means.append(mean)
            spreads.append(np.var(values, ddof=1))
        pooled_se = float(np.sqrt(np.mean(spreads) / len(SEEDS)))
        non_increasing = all(means[i + 1] <= means[i] + pooled_se for i in range(2))
        near_bound = abs(means[-1] - 2.82) <= 0.2 * 2.82
        detail = (f"AEnGMF means {['%.3f' % m for m in means]} over N=25,100,400, "
                  f"pooled SE {pooled_se:.3f}; N=400 vs SIR bound 2.82 +- 20%")
        _report(5, detail, non_increasing and near_bound)


def l96_config():
    return ExperimentConfig(
        model_name="lorenz96", assimilation_interval=0.2,
        obs_name="l96_pointwise", obs_variance=0.25,
        steps=1100, spinup=100, seeds=SEEDS, particles=(10, 20),
        model_params={"size": 40, "forcing": 8.0}, omega=5,
        filters={"ShrAEnGMF": FilterSpec("aengmf", "shrinkage"),
                 "LAEnGMF": FilterSpec("aengmf", "localized", radius=4.0),
                 "ShrEnGMF": FilterSpec("engmf", "shrinkage"),
                 "LEnGMF": FilterSpec("engmf", "localized", radius=4.0),
                 "LEnKF": FilterSpec("lenkf", radius=4.0)},
        em=EMSettings(outer=1, inner=1, batch=100, alpha=1e-2, clip=1.0))


class TestCriterion6Lorenz96:
    def test_criterion_6_l96_small_ensembles(self):
        cfg = l96_config()
        rmse = {}
        for method in cfg.filters:
            for n in (10, 20):
                rmse[(method, n)] = _mean_rmse(cfg, method, n)[0]
        adaptive_win = (rmse[("ShrAEnGMF", 10)] < rmse[("LEnKF", 10)]
                        and rmse[("LAEnGMF", 10)] < rmse[("LEnKF", 10)])
        classic_lose = (rmse[("ShrEnGMF", 10)] >= rmse[("LEnKF", 10)]
                        and rmse[("LEnGMF", 10)] >= rmse[("LEnKF", 10)])
        near_bound = (rmse[("ShrAEnGMF", 20)] <= 2 * 0.2598
                      and rmse[("LAEnGMF", 20)] <= 2 * 0.2598)
        detail = ("N=10: " + ", ".join(f"{m} {rmse[(m, 10)]:.3f}" for m in cfg.filters)
                  + f"; N=20 adaptive {rmse[('ShrAEnGMF', 20)]:.3f}/"
                  f"{rmse[('LAEnGMF', 20)]:.3f} vs 2 x 0.2598")
        _report(6, detail, adaptive_win and classic_lose and near_bound)


class TestCriterion7Theory:
    def test_criterion_7a_bimodal_sir_limit(self):
        rng = np.random.default_rng(2024)
        y = np.array([0.5])
        obs = linear_observation([[1.0]], [[1.0]])
        grid = np.linspace(-10, 10, 200001)
        prior = (np.exp(-0.5 * ((grid + 2) / 0.5) ** 2)
                 + np.exp(-0.5 * ((grid - 2) / 0.5) ** 2))
        post = prior * np.exp(-0.5 * (grid - y[0]) ** 2)
        post /= np.trapezoid(post, grid)
        oracle_mean = np.trapezoid(grid * post, grid)
        oracle_var = np.trapezoid((grid - oracle_mean) ** 2 * post, grid)

        errors = []
        for n_members in (100, 1000, 10000):
            comp = rng.random(n_members) < 0.5
            particles = np.where(comp, -2.0, 2.0) + 0.5 * rng.standard_normal(n_members)
            ens = Ensemble.uniform(particles[None, :])
            b = silverman_bandwidth(n_members, 1) * np.cov(particles)
            factor = np.sqrt(b)
            kernel = AssembledKernel(np.array([[b]]), np.array([[factor]]),
                                     float(np.log(b)), np.zeros((1, 1, 1)))
            res = engmf_analysis(ens, kernel, obs, y)
            draws = gmm_resample(res, rng, 200000).particles[0]
            errors.append(abs(draws.mean() - oracle_mean) + abs(draws.var() - oracle_var))
        detail = f"bimodal moment errors {['%.4f' % e for e in errors]} over N=1e2,1e3,1e4"
        _report("7a", detail, errors[0] > errors[1] > errors[2])

    def test_criterion_7b_fitted_bandwidth_shrinks(self, l63_grid):
        averages = [float(np.mean(l63_grid[("AEnGMF", n)][2])) for n in (25, 100, 400)]
        detail = f"time-averaged fitted beta^2 {['%.4f' % b for b in averages]} over N=25,100,400"
        _report("7b", detail, averages[0] > averages[1] > averages[2])


class TestCriterion8Determinism:
    def test_criterion_8_sweep_determinism(self, tmp_path):
        cfg = ExperimentConfig(
            model_name="lorenz63", assimilation_interval=0.5,
            obs_name="l63_distance", obs_variance=1.0,
            steps=30, spinup=5, seeds=(1, 2), particles=(10,),
            filters={"AEnGMF": FilterSpec("aengmf", "bandwidth"),
                     "SIR": FilterSpec("sir")},
            em=EMSettings(outer=2, inner=1, batch=0, alpha=1.0, clip=1.0))
        paths_a = run_sweep(cfg, tmp_path / "a")
        paths_b = run_sweep(cfg, tmp_path / "b")
        identical = all(open(p1, "rb").read() == open(p2, "rb").read()
                        for p1, p2 in zip(paths_a, paths_b))
        _report(8, "repeated sweep byte-identical CSVs", identical)
