"""Disturbance-injection outer loop.

Per round: collect noise-injected demonstrations from the supervisor (labels
are the intended actions; the world executes the perturbed ones), aggregate
the round-segmented dataset, fit the policy, and read off the next round's
injection variance from the model's noise schedule. BC variants run the same
loop with injection permanently off and a fixed model observation noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .data import RoundSegmentedDataset
from .errors import CollectionError, InputError
from .iomgp import FitConfig, IomgpModel, committed, fit, max_weight, nearest_prev, select_action
from .iomgp.predict import sample_mode
from .rng import derive_rng, derive_seed
from .sim import EpisodeResult, PidExpert, SweepConfig, reset, rollout

log = logging.getLogger(__name__)


class MethodId(str, Enum):
    UGP_BC = "UGP_BC"
    UGP_BDI = "UGP_BDI"
    MGP_BC = "MGP_BC"
    MGP_BDI = "MGP_BDI"

    @property
    def multimodal(self) -> bool:
        return self.name.startswith("MGP")

    @property
    def injecting(self) -> bool:
        return self.name.endswith("BDI")


@dataclass(frozen=True)
class InjectionConfig:
    initial_variance: float = 1e-4
    rounds: int = 5
    demos_per_round: int = 2
    enabled: bool = True
    record_stride: int = 1
    redraw_budget: int = 20
    bc_observation_variance: float = 1e-4
    expert_dither: float = 0.0

    def __post_init__(self) -> None:
        if self.initial_variance <= 0:
            raise InputError("initial_variance must be positive")
        if self.rounds < 1 or self.demos_per_round < 1 or self.record_stride < 1:
            raise InputError("rounds, demos_per_round and record_stride must be >= 1")


@dataclass
class RoundRecord:
    round: int
    sigma2_injected: float
    sigma2_next: float | None
    elbo: float
    n_data: int
    converged: bool


@dataclass
class BenchTrace:
    method: str
    seed: int
    rounds: list[RoundRecord] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "version": 1,
            "method": self.method,
            "seed": self.seed,
            "rounds": [
                {
                    "round": r.round,
                    "sigma2_injected": r.sigma2_injected,
                    "sigma2_next": r.sigma2_next,
                    "elbo": r.elbo,
                    "n_data": r.n_data,
                    "converged": r.converged,
                }
                for r in self.rounds
            ],
        }


def pid_supervisor_factory(env_cfg: SweepConfig, seed: int, dither_std: float = 0.0):
    """Episode scripts: two-box rounds alternate the sweep order; three-box
    demos use a seeded random order per demonstration. dither_std adds the
    supervisor's own seeded command jitter (a stand-in for human
    variability)."""

    def make(round_idx: int, demo_idx: int) -> PidExpert:
        if env_cfg.n_boxes == 2:
            order = [0, 1] if demo_idx % 2 == 0 else [1, 0]
        else:
            rng = derive_rng(seed, "sweep-order", round_idx, demo_idx)
            order = [int(i) for i in rng.permutation(env_cfg.n_boxes)]
        dither_rng = (
            derive_rng(seed, "expert-dither", round_idx, demo_idx) if dither_std > 0 else None
        )
        return PidExpert(env_cfg, order, dither_std=dither_std, dither_rng=dither_rng)

    return make


def collect_round(
    env_cfg: SweepConfig,
    supervisor_for_demo,
    sigma2: float,
    demos: int,
    seed: int,
    round_idx: int = 0,
    start_perturbation: float = 0.0,
    redraw_budget: int = 20,
) -> list[EpisodeResult]:
    """Collect `demos` successful noise-injected demonstrations.

    Per step the supervisor's intended action is recorded while the world
    executes intended + eps, eps ~ N(0, sigma2 I), clamped by the env.
    Unsuccessful episodes are discarded and redrawn (fresh seeds), up to
    `redraw_budget` redraws per required success.
    """
    if sigma2 < 0:
        raise InputError("sigma2 must be non-negative")
    results = []
    for demo_idx in range(demos):
        episode = None
        for attempt in range(redraw_budget + 1):
            world = reset(
                env_cfg,
                start_perturbation=start_perturbation,
                seed=derive_seed(seed, "collect", round_idx, demo_idx, attempt),
            )
            supervisor = supervisor_for_demo(round_idx, demo_idx)
            if sigma2 > 0:
                noise_rng = derive_rng(seed, "inject", round_idx, demo_idx, attempt)
                std = float(np.sqrt(sigma2))

                def executor(intended, _rng=noise_rng, _std=std):
                    return intended + _rng.normal(0.0, _std, size=2)

            else:
                executor = None
            res = rollout(world, supervisor, executor=executor)
            if res.success:
                episode = res
                break
        if episode is None:
            raise CollectionError(
                f"no successful demonstration within {redraw_budget} redraws "
                f"(round {round_idx}, demo {demo_idx}, sigma2={sigma2:.3g}); "
                "the injection noise may be too large for the supervisor"
            )
        results.append(episode)
    return results


def _append_round(
    dataset: RoundSegmentedDataset | None,
    episodes: list[EpisodeResult],
    sigma2: float,
    stride: int,
) -> RoundSegmentedDataset:
    states = np.vstack([ep.trajectory.states[::stride] for ep in episodes])
    actions = np.vstack([ep.trajectory.intended[::stride] for ep in episodes])
    if dataset is None:
        return RoundSegmentedDataset(
            states=states, actions=actions, round_sizes=[states.shape[0]],
            injected_sigma2=[float(sigma2)],
        )
    return dataset.appended(states, actions, sigma2)


def run_bdi(
    env_cfg: SweepConfig,
    method: MethodId,
    inj: InjectionConfig,
    fit_template: FitConfig,
    seed: int,
    supervisor_factory=None,
    round_hook=None,
) -> tuple[IomgpModel, BenchTrace, RoundSegmentedDataset]:
    """The full outer loop for one method/seed cell.

    Returns the final model, the per-round trace, and the aggregated dataset.
    `round_hook(k, model)` runs after each round's fit (for per-round eval).
    """
    method = MethodId(method)
    enabled = inj.enabled and method.injecting
    if method.injecting != inj.enabled:
        # MethodId wins: *_BC forces injection off, *_BDI forces it on
        enabled = method.injecting
    m_max = fit_template.m_max if method.multimodal else 1
    supervisor_factory = supervisor_factory or pid_supervisor_factory(
        env_cfg, seed, dither_std=inj.expert_dither
    )
    trace = BenchTrace(method=method.value, seed=seed)
    dataset: RoundSegmentedDataset | None = None
    model: IomgpModel | None = None
    estimates: list[float] = []  # sigma^2_{j+1} frozen after round j
    for k in range(1, inj.rounds + 1):
        if enabled:
            sigma2_inject = inj.initial_variance if k == 1 else estimates[-1]
        else:
            sigma2_inject = 0.0
        episodes = collect_round(
            env_cfg,
            supervisor_factory,
            sigma2_inject,
            inj.demos_per_round,
            seed,
            round_idx=k,
            redraw_budget=inj.redraw_budget,
        )
        dataset = _append_round(dataset, episodes, sigma2_inject, inj.record_stride)
        if enabled:
            live_init = inj.initial_variance if k == 1 else estimates[-1]
            schedule = [inj.initial_variance, *estimates, live_init]
        else:
            schedule = [inj.bc_observation_variance] * (k + 1)
        cfg = replace(
            fit_template,
            m_max=m_max,
            optimize_noise_last=enabled,
            noise_mode="last_round" if enabled else "homoscedastic",
            seed=derive_seed(seed, "fit", k),
        )
        # candidate fits: warm-started from the previous round's assignment
        # structure plus fresh seeded restarts; the bound picks the winner
        candidates = []
        if model is not None:
            candidates.append(fit(dataset, cfg, noise_schedule=schedule, warm_resp=model.resp.r))
        for restart in range(max(1, fit_template.fit_restarts)):
            candidates.append(
                fit(
                    dataset,
                    replace(cfg, seed=derive_seed(seed, "fit", k, restart)),
                    noise_schedule=schedule,
                )
            )
        model = max(candidates, key=lambda c: c.elbo_trace[-1])
        sigma2_next = model.noise_schedule[-1] if enabled else None
        if enabled:
            estimates.append(float(model.noise_schedule[-1]))
        trace.rounds.append(
            RoundRecord(
                round=k,
                sigma2_injected=float(sigma2_inject),
                sigma2_next=sigma2_next,
                elbo=float(model.elbo_trace[-1]),
                n_data=dataset.n,
                converged=model.converged,
            )
        )
        log.info(
            "%s seed=%d round %d/%d: n=%d elbo=%.4g sigma2_next=%s",
            method.value, seed, k, inj.rounds, dataset.n,
            model.elbo_trace[-1], f"{sigma2_next:.3g}" if sigma2_next else "-",
        )
        if round_hook is not None:
            round_hook(k, model)
    return model, trace, dataset


class ModelPolicy:
    """Rollout adapter: world observation -> model action under a runtime
    mode-selection rule. `committed` draws its mode once per episode."""

    def __init__(self, model: IomgpModel, mode_policy: str = "committed", episode_seed: int = 0):
        self.model = model
        self.mode_policy = mode_policy
        if mode_policy == "committed":
            self._mode = sample_mode(model, derive_rng(episode_seed, "mode-draw"))
        elif mode_policy not in ("max_weight", "nearest_prev"):
            raise InputError(f"unknown mode policy {mode_policy!r}")

    def __call__(self, world, prev_executed=None) -> np.ndarray:
        obs = world.observe()
        if self.mode_policy == "committed":
            selector = committed(self._mode)
        elif self.mode_policy == "max_weight":
            selector = max_weight()
        else:
            selector = nearest_prev(prev_executed)
        return select_action(self.model, obs, selector)
