"""Kernel, gram and GP-conditioning checks against dense brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgp_bdi.errors import InputError
from mgp_bdi.gp import (
    GaussianPosterior,
    KernelParams,
    build_gram,
    gp_posterior,
    gp_predict,
    gp_predict_batch,
    kernel_eval,
    kernel_matrix,
)


def reference_kernel(x, y, sf2, ell):
    # scalar element-wise evaluation, no vectorization shortcuts
    acc = 0.0
    for xi, yi in zip(x, y):
        acc += (xi - yi) ** 2
    return sf2 * np.exp(-acc / (2.0 * ell * ell))


def dense_posterior(K, a, noise):
    """Naive O(N^3) reference on a given (jittered) gram: explicit inverses
    of both the precision form (K^-1 + B)^-1 B a and the covariance form."""
    B = np.diag(1.0 / np.asarray(noise))
    cov = np.linalg.inv(np.linalg.inv(K) + B)
    mu_precision = cov @ B @ a
    mu_covform = K @ np.linalg.solve(K + np.diag(noise), a)
    return mu_precision, mu_covform, cov


class TestKernel:
    def test_zero_distance_gives_signal_variance(self):
        p = KernelParams.from_values(1.0, 1.0)
        x = np.array([0.3, -1.2])
        assert kernel_eval(x, x, p) == pytest.approx(1.0)

    def test_one_lengthscale_separation(self):
        p = KernelParams.from_values(1.0, 0.7)
        x = np.zeros(3)
        y = np.array([0.7, 0.0, 0.0])
        assert kernel_eval(x, y, p) == pytest.approx(np.exp(-0.5), rel=1e-12)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(7)
        p = KernelParams.from_values(2.5, 0.3)
        for _ in range(20):
            x, y = rng.normal(size=4), rng.normal(size=4)
            assert kernel_eval(x, y, p) == pytest.approx(
                reference_kernel(x, y, 2.5, 0.3), rel=1e-13
            )

    def test_dimension_mismatch(self):
        p = KernelParams.from_values(1.0, 1.0)
        with pytest.raises(InputError):
            kernel_eval(np.zeros(2), np.zeros(3), p)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-5, 5), min_size=2, max_size=5),
        st.lists(st.floats(-5, 5), min_size=2, max_size=5),
        st.floats(0.1, 4.0),
        st.floats(0.1, 3.0),
    )
    def test_symmetry_and_bounds(self, xs, ys, sf2, ell):
        n = min(len(xs), len(ys))
        x, y = np.array(xs[:n]), np.array(ys[:n])
        p = KernelParams.from_values(sf2, ell)
        kxy = kernel_eval(x, y, p)
        assert kxy == pytest.approx(kernel_eval(y, x, p), rel=1e-13)
        # mathematically in (0, sf2]; exp underflow can round the far tail to 0
        assert 0.0 <= kxy <= sf2 * (1 + 1e-12)
        if np.sum((x - y) ** 2) < 100 * ell * ell:
            assert kxy > 0.0


class TestGram:
    def test_single_state(self):
        p = KernelParams.from_values(1.5, 1.0)
        g = build_gram([[0.0, 0.0]], p, jitter=1e-6)
        assert g.entries.shape == (1, 1)
        assert g.entries[0, 0] == pytest.approx(1.5 + 1e-6)

    def test_duplicate_states_rank_deficiency_and_jitter(self):
        p = KernelParams.from_values(1.0, 1.0)
        X = np.array([[0.1, 0.2], [0.1, 0.2]])
        raw = kernel_matrix(X, X, p)
        assert np.linalg.matrix_rank(raw) == 1
        g = build_gram(X, p, jitter=1e-6)
        assert g.jitter == pytest.approx(1e-6)
        assert np.all(np.linalg.eigvalsh(g.entries) > 0)

    def test_matches_pairwise_loop(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(5, 3))
        p = KernelParams.from_values(0.8, 0.6)
        g = build_gram(X, p)
        for i in range(5):
            for j in range(5):
                expect = reference_kernel(X[i], X[j], 0.8, 0.6) + (g.jitter if i == j else 0.0)
                assert g.entries[i, j] == pytest.approx(expect, abs=1e-14)

    def test_escalation_reaches_pd(self):
        p = KernelParams.from_values(1.0, 10.0)  # long lengthscale: near-singular gram
        rng = np.random.default_rng(0)
        X = np.repeat(rng.normal(size=(4, 2)), 50, axis=0)
        g = build_gram(X, p, jitter=0.0)
        assert g.jitter > 0
        np.linalg.cholesky(g.entries)

    def test_gram_psd_up_to_200(self):
        rng = np.random.default_rng(11)
        p = KernelParams.from_values(1.0, 0.5)
        for n in (20, 100, 200):
            g = build_gram(rng.normal(size=(n, 4)), p)
            assert np.min(np.diag(g.chol_lower)) > 0


class TestPosterior:
    def test_scalar_conjugate_update(self):
        p = KernelParams.from_values(1.0, 1.0)
        post = gp_posterior([[0.0]], [2.0], p, [1.0], jitter=0.0)
        assert post.mu[0] == pytest.approx(1.0, rel=1e-12)
        assert post.cov[0, 0] == pytest.approx(0.5, rel=1e-12)

    def test_huge_noise_reverts_to_prior(self):
        rng = np.random.default_rng(5)
        p = KernelParams.from_values(1.0, 0.5)
        X = rng.normal(size=(8, 2))
        a = rng.normal(size=8)
        post = gp_posterior(X, a, p, np.full(8, 1e12))
        assert np.max(np.abs(post.mu)) < 1e-6

    def test_matches_dense_solve_oracle(self):
        rng = np.random.default_rng(9)
        X = np.linspace(0, 3, 20)[:, None]
        a = np.sin(X[:, 0])
        noise = rng.uniform(0.05, 0.2, size=20)
        p = KernelParams.from_values(1.3, 0.7)
        post = gp_posterior(X, a, p, noise)
        mu_prec, mu_cov, cov = dense_posterior(post.gram.entries, a, noise)
        np.testing.assert_allclose(post.mu, mu_cov, atol=1e-9)
        np.testing.assert_allclose(post.mu, mu_prec, atol=1e-8)
        np.testing.assert_allclose(post.cov, cov, atol=1e-8)

    def test_both_forms_agree_on_random_instances(self):
        rng = np.random.default_rng(21)
        for trial in range(10):
            n = rng.integers(3, 30)
            X = rng.normal(size=(n, rng.integers(1, 4)))
            a = rng.normal(size=n)
            noise = rng.uniform(0.01, 1.0, size=n)
            sf2, ell = rng.uniform(0.2, 3), rng.uniform(0.2, 2)
            post = gp_posterior(X, a, KernelParams.from_values(sf2, ell), noise)
            mu_prec, _, _ = dense_posterior(post.gram.entries, a, noise)
            np.testing.assert_allclose(post.mu, mu_prec, atol=1e-8)

    def test_nonpositive_noise_rejected(self):
        p = KernelParams.from_values(1.0, 1.0)
        with pytest.raises(InputError):
            gp_posterior([[0.0]], [1.0], p, [0.0])


class TestPredict:
    def _fit(self, n=30, seed=13):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-2, 2, size=(n, 2))
        a = np.sin(X[:, 0]) + 0.3 * X[:, 1]
        noise = np.full(n, 0.01)
        p = KernelParams.from_values(1.0, 0.8)
        return X, a, noise, p, gp_posterior(X, a, p, noise)

    def test_interpolates_training_point_with_tiny_noise(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, size=(10, 2))
        a = rng.normal(size=10)
        p = KernelParams.from_values(1.0, 0.8)
        post = gp_posterior(X, a, p, np.full(10, 1e-8))
        mean, _ = gp_predict(post, X[4])
        assert mean == pytest.approx(a[4], abs=1e-3)

    def test_prior_reversion_far_away(self):
        X, a, noise, p, post = self._fit()
        far = np.array([100.0, -100.0])
        mean, var = gp_predict(post, far)
        assert abs(mean) < 1e-4
        assert var == pytest.approx(p.signal_variance, abs=1e-4)

    def test_matches_dense_solve_on_queries(self):
        X, a, noise, p, post = self._fit()
        rng = np.random.default_rng(4)
        queries = rng.uniform(-2, 2, size=(5, 2))
        Vinv = np.linalg.inv(post.gram.entries + np.diag(noise))
        for q in queries:
            ks = kernel_matrix(X, q[None, :], p)[:, 0]
            mean_ref = ks @ Vinv @ a
            var_ref = p.signal_variance - ks @ Vinv @ ks
            mean, var = gp_predict(post, q)
            assert mean == pytest.approx(mean_ref, abs=1e-9)
            assert var == pytest.approx(var_ref, abs=1e-9)

    def test_variance_nonnegative_everywhere(self):
        X, a, noise, p, post = self._fit(n=60)
        rng = np.random.default_rng(8)
        queries = np.vstack([rng.uniform(-3, 3, size=(200, 2)), X])
        _, var = gp_predict_batch(post, queries)
        assert np.all(var >= 0.0)

    def test_query_dimension_mismatch(self):
        X, a, noise, p, post = self._fit()
        with pytest.raises(InputError):
            gp_predict(post, np.zeros(3))
