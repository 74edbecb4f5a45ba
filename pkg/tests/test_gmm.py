import numpy as np
import pytest
from numpy.testing import assert_allclose

from engmf_lab.gmm import (Ensemble, GaussianMixture, log_sum_exp, mixture_log_density,
                           mixture_sample, normalize_log_weights)


def single_gaussian(mean, std):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    n = mean.shape[0]
    return GaussianMixture(np.zeros(1), mean[:, None], (std * np.eye(n))[None])


class TestLogSumExp:
    def test_pair_of_zeros(self):
        assert_allclose(log_sum_exp(np.zeros(2)), np.log(2.0), rtol=1e-14)

    def test_singleton(self):
        assert_allclose(log_sum_exp(np.array([3.7])), 3.7)

    def test_no_overflow(self):
        assert_allclose(log_sum_exp(np.array([1000.0, 1000.0])), 1000.0 + np.log(2.0))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp(np.array([]))

    def test_all_minus_inf(self):
        assert log_sum_exp(np.array([-np.inf, -np.inf])) == -np.inf

    def test_axis_variant(self):
        v = np.array([[0.0, 0.0], [-np.inf, -np.inf]])
        out = log_sum_exp(v, axis=1)
        assert_allclose(out[0], np.log(2.0))
        assert out[1] == -np.inf

    def test_normalize_idempotent(self):
        rng = np.random.default_rng(0)
        w = rng.standard_normal(9)
        once = normalize_log_weights(w)
        assert_allclose(normalize_log_weights(once), once, atol=1e-15)
        assert abs(log_sum_exp(once)) < 1e-12


class TestEnsemble:
    def test_normalizes_on_construction(self):
        ens = Ensemble(np.zeros((2, 3)), np.array([1.0, 2.0, 3.0]))
        assert abs(log_sum_exp(ens.log_weights)) < 1e-12

    def test_uniform_factory(self):
        ens = Ensemble.uniform(np.random.default_rng(0).standard_normal((4, 6)))
        assert_allclose(ens.weights, np.full(6, 1.0 / 6.0))

    def test_nonfinite_particles_rejected(self):
        with pytest.raises(ValueError):
            Ensemble(np.array([[np.nan]]), np.array([0.0]))


class TestMixtureLogDensity:
    def test_standard_normal_at_zero(self):
        gmm = single_gaussian(0.0, 1.0)
        assert_allclose(mixture_log_density(gmm, np.zeros(1)),
                        -0.5 * np.log(2.0 * np.pi), rtol=1e-14)

    def test_duplicate_components_collapse(self):
        gmm1 = single_gaussian(0.3, 1.2)
        gmm2 = GaussianMixture(np.log(np.array([0.5, 0.5])),
                               np.array([[0.3, 0.3]]), 1.2 * np.eye(1)[None].repeat(2, axis=0))
        for x in np.linspace(-3, 3, 7):
            assert_allclose(mixture_log_density(gmm2, np.array([x])),
                            mixture_log_density(gmm1, np.array([x])), rtol=1e-13)

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(42)
        means = np.array([[-1.0, 2.0]])
        stds = np.array([0.7, 1.8])
        weights = np.array([0.4, 0.6])
        gmm = GaussianMixture(np.log(weights), means,
                              np.stack([(s * np.eye(1)) for s in stds]))
        for x in rng.standard_normal(20) * 3:
            naive = sum(w * np.exp(-0.5 * (x - m) ** 2 / s**2) / np.sqrt(2 * np.pi * s**2)
                        for w, m, s in zip(weights, means[0], stds))
            assert_allclose(mixture_log_density(gmm, np.array([x])), np.log(naive), rtol=1e-12)

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(1)
        c = 5
        means = rng.standard_normal((3, c))
        factors = np.stack([np.linalg.cholesky(np.eye(3) + 0.3 * np.outer(v, v))
                            for v in rng.standard_normal((c, 3))])
        logw = rng.standard_normal(c)
        perm = rng.permutation(c)
        gmm = GaussianMixture(logw, means, factors)
        gmm_p = GaussianMixture(logw[perm], means[:, perm], factors[perm])
        x = rng.standard_normal(3)
        assert_allclose(mixture_log_density(gmm, x), mixture_log_density(gmm_p, x), rtol=1e-13)

    def test_density_integrates_to_one_1d(self):
        gmm = GaussianMixture(np.log([0.3, 0.7]), np.array([[-1.0, 1.5]]),
                              np.stack([0.6 * np.eye(1), 1.1 * np.eye(1)]))
        grid = np.linspace(-12, 12, 20001)
        dens = np.exp([mixture_log_density(gmm, np.array([x])) for x in grid])
        assert abs(np.trapezoid(dens, grid) - 1.0) < 1e-6


class TestMixtureSample:
    def test_degenerate_width_collapses_to_mean(self):
        gmm = single_gaussian([1.0, -2.0], 1e-15)
        draws = mixture_sample(gmm, np.random.default_rng(0), 50)
        assert_allclose(draws, np.array([[1.0], [-2.0]]).repeat(50, axis=1), atol=1e-12)

    def test_standard_normal_moments(self):
        gmm = single_gaussian(0.0, 1.0)
        draws = mixture_sample(gmm, np.random.default_rng(123), 100000)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.03

    def test_component_frequencies(self):
        gmm = GaussianMixture(np.log([0.3, 0.7]), np.array([[-10.0, 10.0]]),
                              np.stack([np.eye(1), np.eye(1)]))
        draws = mixture_sample(gmm, np.random.default_rng(7), 100000)
        frac_right = np.mean(draws[0] > 0)
        assert abs(frac_right - 0.7) < 0.01

    def test_count_contract(self):
        gmm = single_gaussian(0.0, 1.0)
        assert mixture_sample(gmm, np.random.default_rng(0), 17).shape == (1, 17)
        with pytest.raises(ValueError):
            mixture_sample(gmm, np.random.default_rng(0), 0)
