import numpy as np
import pytest
from scipy import stats

from bmim.data import DataError
from bmim.likelihood import (Hyperparameters, LikelihoodWorkspace, MarginalCache,
                             draw_sigma_gamma, integrated_log_posterior,
                             marginal_log_likelihood)
from oracles import quadrature_evidence, random_psd


def small_instance(rng, n=4, q=1, lam_inv=0.5):
    K = random_psd(n, rng, diag_one=True)
    Z = np.column_stack([np.ones(n)] +
                        [rng.standard_normal(n) for _ in range(q - 1)])
    y = rng.standard_normal(n)
    return y, Z, K, lam_inv


class TestMarginalLogLikelihood:
    def test_lambda_zero_reduces_to_iid_normals(self, rng):
        n = 6
        y, Z, K, _ = small_instance(rng, n=n, q=2)
        gamma = rng.standard_normal(2)
        sigma2 = 1.7
        got = marginal_log_likelihood(y, Z, K, gamma, sigma2, 0.0)
        want = stats.norm.logpdf(y, loc=Z @ gamma, scale=np.sqrt(sigma2)).sum()
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_scalar_case(self):
        # One observation, zero mean, unit noise, unit kernel scale: the
        # marginal variance is 2, so the log density at 0 is -log(4 pi)/2.
        got = marginal_log_likelihood(np.zeros(1), None, np.ones((1, 1)),
                                      np.empty(0), 1.0, 1.0)
        np.testing.assert_allclose(got, -0.5 * np.log(4.0 * np.pi), rtol=1e-12)

    def test_matches_dense_oracle(self, rng):
        y, Z, K, lam = small_instance(rng, n=4, q=2)
        gamma = rng.standard_normal(2)
        sigma2 = 0.8
        got = marginal_log_likelihood(y, Z, K, gamma, sigma2, lam)
        cov = sigma2 * (np.eye(4) + lam * K)
        want = stats.multivariate_normal(mean=Z @ gamma, cov=cov).logpdf(y)
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_joint_scaling_invariance(self, rng):
        # Scaling the residual and noise sd together leaves the standardized
        # quadratic form unchanged; the density shifts only by the
        # normalization, which the dense oracle reproduces.
        y, Z, K, lam = small_instance(rng, n=4, q=1)
        gamma = rng.standard_normal(1)
        for c in (2.0, 5.0):
            got = marginal_log_likelihood(c * y, Z, K, c * gamma, c * c * 1.3, lam)
            cov = c * c * 1.3 * (np.eye(4) + lam * K)
            want = stats.multivariate_normal(mean=Z @ (c * gamma), cov=cov).logpdf(c * y)
            np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_rejects_bad_sigma(self, rng):
        y, Z, K, lam = small_instance(rng)
        with pytest.raises(DataError):
            marginal_log_likelihood(y, Z, K, np.zeros(1), 0.0, lam)


class TestIntegratedLogPosterior:
    def test_matches_quadrature(self, rng):
        y, Z, K, lam = small_instance(rng, n=4, q=1)
        hyper = Hyperparameters(a_sigma=1.5, b_sigma=1.0)
        closed = integrated_log_posterior(y, Z, K, lam, hyper)
        quad = quadrature_evidence(y, Z, K, lam, 1.5, 1.0)
        assert abs(np.expm1(closed - quad)) < 1e-6

    def test_posterior_odds_match_quadrature(self, rng):
        hyper = Hyperparameters(a_sigma=1.2, b_sigma=0.8)
        y, Z, K1, _ = small_instance(rng, n=5, q=1)
        K2 = random_psd(5, rng, diag_one=True)
        states = [(K1, 0.4), (K2, 1.3)]
        closed = [integrated_log_posterior(y, Z, K, lam, hyper) for K, lam in states]
        quad = [quadrature_evidence(y, Z, K, lam, 1.2, 0.8) for K, lam in states]
        assert abs(np.expm1((closed[0] - closed[1]) - (quad[0] - quad[1]))) < 1e-5

    def test_shift_invariance_with_intercept(self, rng):
        y, Z, K, lam = small_instance(rng, n=5, q=2)
        hyper = Hyperparameters()
        base = integrated_log_posterior(y, Z, K, lam, hyper)
        for c in (-3.0, 10.0):
            shifted = integrated_log_posterior(y + c, Z, K, lam, hyper)
            np.testing.assert_allclose(shifted, base, rtol=1e-9, atol=1e-9)

    def test_lambda_zero_ignores_kernel(self, rng):
        y, Z, K, _ = small_instance(rng, n=5, q=1)
        other = random_psd(5, rng)
        hyper = Hyperparameters()
        a = integrated_log_posterior(y, Z, K, 0.0, hyper)
        b = integrated_log_posterior(y, Z, other, 0.0, hyper)
        assert a == b

    def test_depends_only_on_product(self, rng):
        y, Z, K, lam = small_instance(rng, n=5, q=1)
        hyper = Hyperparameters()
        base = integrated_log_posterior(y, Z, K, lam, hyper)
        exact = integrated_log_posterior(y, Z, 2.0 * K, lam / 2.0, hyper)
        assert base == exact  # power-of-two scaling is float-exact
        near = integrated_log_posterior(y, Z, 3.0 * K, lam / 3.0, hyper)
        np.testing.assert_allclose(near, base, rtol=1e-12)

    def test_jitter_step_changes_little(self, rng):
        y, Z, K, lam = small_instance(rng, n=6, q=1)
        hyper = Hyperparameters()
        plain = MarginalCache(y, Z, K, lam).integrated_log_posterior(hyper)
        jittered = MarginalCache(y, Z, K, lam,
                                 jitter_start=1e-10).integrated_log_posterior(hyper)
        assert abs(plain - jittered) < 1e-6

    def test_rank_deficient_covariates_rejected(self, rng):
        n = 6
        z = rng.standard_normal(n)
        Z = np.column_stack([np.ones(n), z, z])
        with pytest.raises(DataError, match="rank"):
            integrated_log_posterior(rng.standard_normal(n), Z,
                                     random_psd(n, rng), 0.5, Hyperparameters())

    def test_workspace_matches_plain_path(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 25))
            y, Z, K, _ = small_instance(rng, n=n, q=2)
            lam = float(rng.uniform(0.0, 3.0))
            hyper = Hyperparameters(a_sigma=0.7, b_sigma=1.1)
            ws = LikelihoodWorkspace(y, Z)
            a = MarginalCache(y, Z, K, lam).integrated_log_posterior(hyper)
            b = MarginalCache(y, Z, K, lam, workspace=ws).integrated_log_posterior(hyper)
            np.testing.assert_allclose(a, b, rtol=1e-12)


class TestSigmaGammaDraws:
    def test_gamma_mean_matches_least_squares(self, rng):
        # With no kernel part and a diffuse noise prior, covariate draws
        # center on the least-squares estimate.
        n = 40
        Z = np.column_stack([np.ones(n), rng.standard_normal(n)])
        y = Z @ np.array([1.0, -2.0]) + rng.standard_normal(n)
        K = np.eye(n)
        hyper = Hyperparameters(a_sigma=0.001, b_sigma=0.001)
        sigma2, gamma = draw_sigma_gamma(y, Z, K, 0.0, hyper,
                                         np.random.default_rng(11), size=100_000)
        ls = np.linalg.lstsq(Z, y, rcond=None)[0]
        se = gamma.std(axis=0, ddof=1) / np.sqrt(gamma.shape[0])
        assert np.all(np.abs(gamma.mean(axis=0) - ls) < 3.0 * se)

    def test_fixed_seed_reproducible(self, rng):
        y, Z, K, lam = small_instance(rng, n=6, q=2)
        hyper = Hyperparameters(a_sigma=2.0, b_sigma=1.0)
        a = draw_sigma_gamma(y, Z, K, lam, hyper, np.random.default_rng(5))
        b = draw_sigma_gamma(y, Z, K, lam, hyper, np.random.default_rng(5))
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_sigma2_moments(self, rng):
        # sigma2 is inverse-gamma; empirical mean and variance of the draws
        # match the analytic moments within Monte-Carlo error.
        y, Z, K, lam = small_instance(rng, n=6, q=2)
        hyper = Hyperparameters(a_sigma=3.0, b_sigma=2.0)
        cache = MarginalCache(y, Z, K, lam)
        m = 200_000
        sigma2, _ = cache.draw_sigma_gamma(hyper, np.random.default_rng(3), size=m)
        shape = hyper.a_sigma + 0.5 * (6 - 2)
        rate = hyper.b_sigma + 0.5 * cache.resid_ss
        dist = stats.invgamma(shape, scale=rate)
        mean, var, _, kurt = dist.stats(moments="mvsk")
        se_mean = np.sqrt(var / m)
        assert abs(sigma2.mean() - mean) < 3.0 * se_mean
        se_var = np.sqrt(var ** 2 * ((kurt + 2.0) / m + 2.0 / (m - 1)))
        assert abs(sigma2.var(ddof=1) - var) < 3.0 * se_var
