"""Collection semantics (label purity, determinism, noise audit) and the
outer-loop bookkeeping."""

import numpy as np
import pytest

from mgp_bdi.data import dataset_to_doc
from mgp_bdi.errors import CollectionError
from mgp_bdi.iomgp import FitConfig, fit, predict_modes
from mgp_bdi.loop import (
    InjectionConfig,
    MethodId,
    collect_round,
    pid_supervisor_factory,
    run_bdi,
)
from mgp_bdi.rng import derive_seed
from mgp_bdi.sim import PidExpert, SweepConfig


def quick_fit_template(**kw):
    base = dict(
        m_max=5, seed=0, optimize_kernels=True, max_e_sweeps=40, max_outer=6,
        kernel_opt_iters=25,
    )
    base.update(kw)
    return FitConfig(**base)


class SlowExpert:
    """Half-speed supervisor: intended actions stay well inside the limit so
    the execution clamp never distorts the injected noise."""

    def __init__(self, cfg, order):
        self._inner = PidExpert(cfg, order)

    def __call__(self, world, prev_executed=None):
        return 0.5 * self._inner.intended_action(world)


class TestCollectRound:
    def test_zero_noise_executes_intended(self):
        cfg = SweepConfig()
        eps = collect_round(cfg, pid_supervisor_factory(cfg, 0), 0.0, 2, seed=0)
        for ep in eps:
            np.testing.assert_array_equal(ep.trajectory.executed, ep.trajectory.intended)

    def test_fixed_seed_bit_identical(self):
        cfg = SweepConfig()
        a = collect_round(cfg, pid_supervisor_factory(cfg, 3), 1e-4, 2, seed=3)
        b = collect_round(cfg, pid_supervisor_factory(cfg, 3), 1e-4, 2, seed=3)
        for ea, eb in zip(a, b):
            np.testing.assert_array_equal(ea.trajectory.states, eb.trajectory.states)
            np.testing.assert_array_equal(ea.trajectory.executed, eb.trajectory.executed)

    def test_monte_carlo_noise_variance(self):
        cfg = SweepConfig(horizon=500)
        sigma2 = 1e-4  # noise std 0.01 vs slow-expert actions <= 0.05: no clamping

        def factory(round_idx, demo_idx):
            return SlowExpert(cfg, [demo_idx % 2, 1 - demo_idx % 2])

        eps = collect_round(cfg, factory, sigma2, 4, seed=1)
        diffs = np.vstack([ep.trajectory.executed - ep.trajectory.intended for ep in eps])
        assert diffs.shape[0] >= 1000
        var = diffs.var(axis=0)
        np.testing.assert_allclose(var, sigma2, rtol=0.15)

    def test_label_purity(self):
        cfg = SweepConfig()
        logged = []

        class LoggingExpert(PidExpert):
            def intended_action(self, world, prev_executed=None):
                a = super().intended_action(world, prev_executed)
                logged.append(a.copy())
                return a

            __call__ = intended_action

        def factory(round_idx, demo_idx):
            return LoggingExpert(cfg, [0, 1])

        eps = collect_round(cfg, factory, 4e-4, 1, seed=5)
        traj = eps[0].trajectory
        np.testing.assert_array_equal(traj.intended, np.asarray(logged[-traj.length :]))
        assert np.any(traj.executed != traj.intended)

    def test_redraw_budget_exhausted(self):
        cfg = SweepConfig(horizon=20)

        def hopeless(round_idx, demo_idx):
            return lambda world, prev=None: np.zeros(2)

        with pytest.raises(CollectionError):
            collect_round(cfg, hopeless, 0.0, 1, seed=0, redraw_budget=2)


class TestRunBdi:
    def test_bc_single_round_equals_plain_fit(self):
        cfg = SweepConfig()
        inj = InjectionConfig(rounds=1, demos_per_round=2, enabled=False, record_stride=3)
        tmpl = quick_fit_template()
        model, trace, dataset = run_bdi(cfg, MethodId.MGP_BC, inj, tmpl, seed=11)
        # replay: same collection, same schedule, same fit seed
        eps = collect_round(
            cfg, pid_supervisor_factory(cfg, 11), 0.0, 2, seed=11, round_idx=1
        )
        states = np.vstack([ep.trajectory.states[::3] for ep in eps])
        np.testing.assert_array_equal(dataset.states, states)
        from dataclasses import replace

        from mgp_bdi.data import RoundSegmentedDataset

        manual = fit(
            RoundSegmentedDataset(
                states=states,
                actions=np.vstack([ep.trajectory.intended[::3] for ep in eps]),
                round_sizes=[states.shape[0]],
                injected_sigma2=[0.0],
            ),
            replace(
                tmpl,
                optimize_noise_last=False,
                noise_mode="homoscedastic",
                seed=derive_seed(11, "fit", 1),
            ),
            noise_schedule=[inj.bc_observation_variance] * 2,
        )
        q = dataset.states[5]
        for a, b in zip(predict_modes(model, q), predict_modes(manual, q)):
            np.testing.assert_array_equal(a.mean, b.mean)
        assert trace.rounds[0].sigma2_next is None
        assert trace.rounds[0].sigma2_injected == 0.0

    def test_bc_invariant_to_initial_variance(self):
        cfg = SweepConfig()
        tmpl = quick_fit_template(m_max=2)
        out = []
        for init_var in (1e-4, 0.05):
            inj = InjectionConfig(
                rounds=2, demos_per_round=1, enabled=False,
                record_stride=4, initial_variance=init_var,
            )
            model, trace, dataset = run_bdi(cfg, MethodId.MGP_BC, inj, tmpl, seed=2)
            out.append((dataset_to_doc(dataset), predict_modes(model, dataset.states[0])))
        assert out[0][0] == out[1][0]
        for a, b in zip(out[0][1], out[1][1]):
            np.testing.assert_array_equal(a.mean, b.mean)

    def test_segmentation_and_noise_map(self):
        cfg = SweepConfig()
        inj = InjectionConfig(rounds=2, demos_per_round=1, record_stride=4)
        model, trace, dataset = run_bdi(
            cfg, MethodId.MGP_BDI, inj, quick_fit_template(m_max=2), seed=4
        )
        assert dataset.n_rounds == 2
        assert len(dataset.round_sizes) == 2
        sigma = model.sigma_per_datum()
        # piecewise constant per segment, matching the schedule mapping
        start = 0
        for j, size in enumerate(dataset.round_sizes):
            seg = sigma[start : start + size]
            assert np.all(seg == model.noise_schedule[j + 1])
            start += size
        # round 2 injected what round 1 estimated
        assert trace.rounds[1].sigma2_injected == trace.rounds[0].sigma2_next
        # UGP forces a single component
        m_ugp, _, _ = run_bdi(
            cfg, MethodId.UGP_BC,
            InjectionConfig(rounds=1, demos_per_round=1, enabled=False, record_stride=6),
            quick_fit_template(), seed=4,
        )
        assert m_ugp.m_max == 1

    def test_noise_trace_bounded(self):
        cfg = SweepConfig()
        inj = InjectionConfig(rounds=2, demos_per_round=2, record_stride=4)
        model, trace, _ = run_bdi(cfg, MethodId.MGP_BDI, inj, quick_fit_template(), seed=6)
        bound = 4.0 * cfg.action_limit**2
        for row in trace.rounds:
            assert row.sigma2_next is not None and 0 < row.sigma2_next <= bound
