"""M-step checks: analytic evidence gradients vs central differences, the
closed-form noise update, and ascent behavior."""

import numpy as np
import pytest

from harness import dense_component_evidence, random_instance
from mgp_bdi.gp import KernelParams, sq_distances
from mgp_bdi.iomgp import (
    FitConfig,
    component_evidence,
    elbo,
    init_model,
    noise_last_update,
    optimize_hyperparams,
    update_f,
)
from mgp_bdi.iomgp.hyper import optimize_kernel_params
from tests_support_noise import perfectly_fit_model  # noqa: F401  (fixture import)


def finite_difference(theta, sq, b_inv, actions, h=1e-5):
    grad = np.zeros(2)
    for j in range(2):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        vp, _ = component_evidence(tp, sq, b_inv, actions, with_grad=False)
        vm, _ = component_evidence(tm, sq, b_inv, actions, with_grad=False)
        grad[j] = (vp - vm) / (2 * h)
    return grad


class TestEvidence:
    def test_value_matches_dense(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(14, 2))
        actions = rng.normal(size=(14, 2))
        b_inv = rng.uniform(0.05, 2.0, size=14)
        sq = sq_distances(X, X)
        theta = np.array([np.log(0.8), np.log(0.5)])
        val, _ = component_evidence(theta, sq, b_inv, actions, with_grad=False)
        K = 0.8 * np.exp(-0.5 * sq / 0.25)
        assert val == pytest.approx(dense_component_evidence(K, b_inv, actions), abs=1e-9)

    def test_gradients_match_central_differences(self):
        # acceptance-grade check: 20 random instances, relative error < 1e-4
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(20):
            n = int(rng.integers(6, 30))
            q = int(rng.integers(1, 4))
            d = int(rng.integers(1, 3))
            X = rng.normal(size=(n, q))
            actions = rng.normal(size=(n, d))
            b_inv = rng.uniform(0.02, 3.0, size=n)
            sq = sq_distances(X, X)
            theta = np.array([rng.uniform(-1.5, 1.0), rng.uniform(-1.2, 0.7)])
            _, grad = component_evidence(theta, sq, b_inv, actions)
            fd = finite_difference(theta, sq, b_inv, actions)
            rel = np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6))
            worst = max(worst, rel)
        assert worst < 1e-4

    def test_ascent_improves_evidence(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(-2, 2, size=(30, 1))
        actions = np.sin(2.0 * X) + 0.05 * rng.normal(size=(30, 1))
        b_inv = np.full(30, 0.05)
        sq = sq_distances(X, X)
        start = KernelParams.from_values(0.1, 3.0)  # deliberately misscaled
        v0, _ = component_evidence(
            np.array([start.log_signal_variance, start.log_lengthscale]),
            sq, b_inv, actions, with_grad=False,
        )
        params, info = optimize_kernel_params(start, sq, b_inv, actions)
        v1, _ = component_evidence(
            np.array([params.log_signal_variance, params.log_lengthscale]),
            sq, b_inv, actions, with_grad=False,
        )
        assert v1 > v0 + 1.0
        assert info["iters"] >= 1


class TestNoiseUpdate:
    def test_perfect_fit_clamps_at_minimum(self):
        model = perfectly_fit_model()
        assert noise_last_update(model) == model.cfg.sigma2_min

    def test_zero_mean_substitution(self):
        data_n = 16
        rng = np.random.default_rng(8)
        model = random_instance(3)
        for m in range(model.m_max):
            comp = update_f(model, m)
            comp.mu = np.zeros_like(comp.mu)
            comp.diag_cov = np.full(model.n, 0.125)
        sl = model.last_segment_slice()
        expect = float(np.mean(model.data.actions[sl] ** 2)) + 0.125
        assert noise_last_update(model) == pytest.approx(expect, rel=1e-12)

    def test_mstep_does_not_decrease_bound(self):
        for seed in (0, 4, 9):
            model = random_instance(seed)
            model.cfg.optimize_kernels = True
            model.cfg.optimize_noise_last = True
            for m in range(model.m_max):
                update_f(model, m)
            before = elbo(model)
            optimize_hyperparams(model)
            after = elbo(model)
            assert after >= before - 1e-8 * abs(before)

    def test_noise_positivity_after_mstep(self):
        model = random_instance(7)
        model.cfg.optimize_noise_last = True
        for m in range(model.m_max):
            update_f(model, m)
        optimize_hyperparams(model, {"noise_last"})
        assert all(v >= model.cfg.sigma2_min for v in model.noise_schedule)
