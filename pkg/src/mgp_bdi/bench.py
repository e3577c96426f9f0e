"""Experiment orchestration: the {UGP,MGP} x {BC,BDI} grid across seeds,
per-trial evaluation, aggregate reports, and plot-data exports.

Every output is a pure function of (config, seed): no timestamps, stable key
order, repr-exact doubles.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import dump_json, load_json, save_dataset
from .errors import InputError
from .iomgp import FitConfig, IomgpModel, load_model, predict_modes, save_model
from .loop import BenchTrace, InjectionConfig, MethodId, ModelPolicy, run_bdi
from .rng import derive_seed
from .sim import PidExpert, SweepConfig, reset, rollout

log = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass
class ExperimentConfig:
    env: SweepConfig = field(default_factory=SweepConfig)
    methods: list[MethodId] = field(
        default_factory=lambda: [MethodId.UGP_BC, MethodId.UGP_BDI, MethodId.MGP_BC, MethodId.MGP_BDI]
    )
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    rounds: int = 5
    demos_per_round: int = 2
    record_stride: int = 1
    initial_variance: float = 1e-4
    bc_observation_variance: float = 1e-4
    expert_dither: float = 0.0
    redraw_budget: int = 20
    model: FitConfig = field(default_factory=lambda: FitConfig(m_max=5))
    test_trials: int = 100
    round_eval_trials: int | None = None
    eval_rounds: str = "final"  # "final" | "all"
    mode_policy: str = "committed"
    eval_start_perturbation: float = 0.01
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.test_trials < 1:
            raise InputError("test_trials must be >= 1")
        if not self.seeds:
            raise InputError("seeds must be non-empty")
        if self.eval_rounds not in ("final", "all"):
            raise InputError("eval_rounds must be 'final' or 'all'")
        self.methods = [MethodId(m) for m in self.methods]

    def injection(self) -> InjectionConfig:
        return InjectionConfig(
            initial_variance=self.initial_variance,
            rounds=self.rounds,
            demos_per_round=self.demos_per_round,
            record_stride=self.record_stride,
            redraw_budget=self.redraw_budget,
            bc_observation_variance=self.bc_observation_variance,
            expert_dither=self.expert_dither,
        )

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return {
            "version": 1,
            "env": self.env.to_dict(),
            "methods": [m.value for m in self.methods],
            "seeds": list(self.seeds),
            "rounds": self.rounds,
            "demos_per_round": self.demos_per_round,
            "record_stride": self.record_stride,
            "initial_variance": self.initial_variance,
            "bc_observation_variance": self.bc_observation_variance,
            "expert_dither": self.expert_dither,
            "redraw_budget": self.redraw_budget,
            "model": asdict(self.model),
            "test_trials": self.test_trials,
            "round_eval_trials": self.round_eval_trials,
            "eval_rounds": self.eval_rounds,
            "mode_policy": self.mode_policy,
            "eval_start_perturbation": self.eval_start_perturbation,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        doc.pop("version", None)
        if "env" in doc:
            doc["env"] = SweepConfig.from_dict(doc["env"])
        if "model" in doc:
            doc["model"] = FitConfig(**doc["model"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InputError(f"bad experiment config: {exc}") from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def resolve_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        env_dir = os.environ.get("BDI_OUTPUT_DIR")
        return Path(env_dir) if env_dir else Path("runs")


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = load_json(path)
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def evaluate_policy(env_cfg: SweepConfig, make_policy, trials: int, seed: int,
                    start_perturbation: float) -> list[dict]:
    """Perturbed-start rollouts; one row per trial."""
    rows = []
    for trial in range(trials):
        world = reset(env_cfg, start_perturbation=start_perturbation,
                      seed=derive_seed(seed, "eval-reset", trial))
        policy = make_policy(trial)
        result = rollout(world, policy)
        rows.append({"trial": trial, "score": int(result.score), "success": bool(result.success)})
    return rows


def evaluate_model(model: IomgpModel, env_cfg: SweepConfig, trials: int, seed: int,
                   mode_policy: str, start_perturbation: float) -> list[dict]:
    def make_policy(trial):
        return ModelPolicy(model, mode_policy, episode_seed=derive_seed(seed, "eval-mode", trial))

    return evaluate_policy(env_cfg, make_policy, trials, seed, start_perturbation)


def evaluate_expert(env_cfg: SweepConfig, trials: int, seed: int,
                    start_perturbation: float) -> list[dict]:
    def make_policy(trial):
        if env_cfg.n_boxes == 2:
            order = [trial % 2, 1 - trial % 2]
        else:
            from .rng import derive_rng

            order = [int(i) for i in derive_rng(seed, "expert-order", trial).permutation(env_cfg.n_boxes)]
        return PidExpert(env_cfg, order)

    return evaluate_policy(env_cfg, make_policy, trials, seed, start_perturbation)


def evaluate_zero(env_cfg: SweepConfig, trials: int, seed: int,
                  start_perturbation: float) -> list[dict]:
    return evaluate_policy(
        env_cfg, lambda trial: (lambda world, prev=None: np.zeros(2)),
        trials, seed, start_perturbation,
    )


def summarize(rows: list[dict]) -> dict:
    scores = np.array([r["score"] for r in rows], dtype=float)
    return {
        "n_trials": len(rows),
        "mean_score": float(scores.mean()),
        "std_score": float(scores.std()),
        "success_rate": float(np.mean([r["success"] for r in rows])),
    }


def write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def cell_dir(out_dir: Path, method: MethodId, seed: int) -> Path:
    return out_dir / f"{method.value}_s{seed}"


def train_cell(cfg: ExperimentConfig, method: MethodId, seed: int,
               out_dir: Path | None = None, round_hook=None):
    """Train one method/seed cell and persist model/dataset/trace."""
    out = cell_dir(out_dir or cfg.resolve_output_dir(), method, seed)
    model, trace, dataset = run_bdi(
        cfg.env, method, cfg.injection(), cfg.model, seed, round_hook=round_hook
    )
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out / "dataset.json")
    save_model(model, out / "model.json", dataset_ref="dataset.json")
    dump_json(trace.to_doc(), out / "trace.json")
    return model, trace, dataset, out


def eval_cell(cfg: ExperimentConfig, model: IomgpModel, method: MethodId, seed: int,
              out: Path, trials: int | None = None) -> dict:
    rows = evaluate_model(
        model, cfg.env, trials or cfg.test_trials, seed, cfg.mode_policy,
        cfg.eval_start_perturbation,
    )
    for row in rows:
        row.update(method=method.value, seed=seed)
    summary = summarize(rows)
    summary.update(method=method.value, seed=seed)
    write_csv(out / "eval.csv", ["method", "seed", "trial", "score", "success"], rows)
    dump_json({"version": REPORT_VERSION, "summary": summary, "trials": rows}, out / "eval.json")
    return summary


def run_bench(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Orchestrate train+eval over the grid; per-cell failures are recorded
    and the grid continues."""
    out = out_dir or cfg.resolve_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    expert_rows = evaluate_expert(cfg.env, cfg.test_trials, seed=0,
                                  start_perturbation=cfg.eval_start_perturbation)
    expert_mean = summarize(expert_rows)["mean_score"]
    perf_rows: list[dict] = []
    noise_rows: list[dict] = []
    cells: list[dict] = []
    per_method: dict[str, list[dict]] = {m.value: [] for m in cfg.methods}
    for method in cfg.methods:
        for seed in cfg.seeds:
            try:
                round_perf: list[dict] = []

                def round_hook(k, model, _method=method, _seed=seed):
                    # intermediate rounds only; the final round gets the full
                    # test_trials evaluation below
                    if cfg.eval_rounds != "all" or k == cfg.rounds:
                        return
                    trials = cfg.round_eval_trials or cfg.test_trials
                    rows = evaluate_model(
                        model, cfg.env, trials, _seed, cfg.mode_policy,
                        cfg.eval_start_perturbation,
                    )
                    s = summarize(rows)
                    round_perf.append(
                        {
                            "method": _method.value,
                            "seed": _seed,
                            "round": k,
                            "n_trials": s["n_trials"],
                            "mean_score": s["mean_score"],
                            "std_score": s["std_score"],
                            "success_rate": s["success_rate"],
                            "pct_expert": 100.0 * s["mean_score"] / expert_mean,
                        }
                    )

                model, trace, dataset, cdir = train_cell(
                    cfg, method, seed, out_dir=out, round_hook=round_hook
                )
                summary = eval_cell(cfg, model, method, seed, cdir)
                summary["pct_expert"] = 100.0 * summary["mean_score"] / expert_mean
                per_method[method.value].append(summary)
                round_perf.append(
                    {
                        "method": method.value,
                        "seed": seed,
                        "round": cfg.rounds,
                        "n_trials": summary["n_trials"],
                        "mean_score": summary["mean_score"],
                        "std_score": summary["std_score"],
                        "success_rate": summary["success_rate"],
                        "pct_expert": summary["pct_expert"],
                    }
                )
                perf_rows.extend(round_perf)
                for rec in trace.rounds:
                    if rec.sigma2_next is not None:
                        noise_rows.append(
                            {
                                "method": method.value,
                                "seed": seed,
                                "round": rec.round,
                                "sigma2_next": rec.sigma2_next,
                            }
                        )
                cells.append({"method": method.value, "seed": seed, "status": "ok",
                              "summary": summary})
                log.info("cell %s seed=%d done: mean %.2f", method.value, seed,
                         summary["mean_score"])
            except Exception as exc:
                log.exception("cell %s seed=%d failed", method.value, seed)
                cells.append({"method": method.value, "seed": seed, "status": "failed",
                              "error": f"{type(exc).__name__}: {exc}"})
    methods_summary = {}
    for name, summaries in per_method.items():
        if not summaries:
            continue
        means = np.array([s["mean_score"] for s in summaries])
        methods_summary[name] = {
            "mean_score": float(means.mean()),
            "std_over_seeds": float(means.std()),
            "success_rate": float(np.mean([s["success_rate"] for s in summaries])),
            "pct_expert": float(100.0 * means.mean() / expert_mean),
            "per_seed": summaries,
        }
    report = {
        "version": REPORT_VERSION,
        "expert_mean_score": expert_mean,
        "methods": methods_summary,
        "cells": cells,
        "provenance": {
            "config_hash": cfg.config_hash(),
            "code_version": __version__,
            "seeds": list(cfg.seeds),
        },
        "config": cfg.to_dict(),
    }
    dump_json(report, out / "report.json")
    write_csv(
        out / "performance_vs_round.csv",
        ["method", "seed", "round", "n_trials", "mean_score", "std_score",
         "success_rate", "pct_expert"],
        perf_rows,
    )
    write_csv(out / "noise_vs_round.csv", ["method", "seed", "round", "sigma2_next"], noise_rows)
    return report


def export_mode_bands(model_path: str | Path, cfg: ExperimentConfig, seed: int,
                      out_path: str | Path) -> int:
    """Roll the stored model out once and dump per-step, per-mode predictive
    bands with the executed action; returns the number of CSV rows."""
    model = load_model(Path(model_path))
    world = reset(cfg.env, start_perturbation=cfg.eval_start_perturbation,
                  seed=derive_seed(seed, "export-reset"))
    policy = ModelPolicy(model, cfg.mode_policy, episode_seed=derive_seed(seed, "export-mode"))
    result = rollout(world, policy)
    rows = []
    traj = result.trajectory
    for t in range(traj.length):
        modes = predict_modes(model, traj.states[t])
        for m, mode in enumerate(modes):
            rows.append(
                {
                    "t": t,
                    "mode": m,
                    "weight": mode.weight,
                    "mean_x": mode.mean[0],
                    "mean_y": mode.mean[1],
                    "var_x": mode.variance[0],
                    "var_y": mode.variance[1],
                    "executed_x": traj.executed[t, 0],
                    "executed_y": traj.executed[t, 1],
                }
            )
    write_csv(
        Path(out_path),
        ["t", "mode", "weight", "mean_x", "mean_y", "var_x", "var_y",
         "executed_x", "executed_y"],
        rows,
    )
    return len(rows)
