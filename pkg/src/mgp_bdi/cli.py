"""Command-line interface: train / eval / bench / export-plots / demo-serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import (
    ExperimentConfig,
    cell_dir,
    eval_cell,
    evaluate_expert,
    evaluate_model,
    evaluate_zero,
    export_mode_bands,
    load_experiment_config,
    run_bench,
    summarize,
    train_cell,
    write_csv,
)
from .data import dump_json
from .errors import BdiError, InputError
from .iomgp import load_model
from .loop import MethodId

log = logging.getLogger("bdi")


def _add_config_arg(sub, required=True):
    sub.add_argument("--config", type=Path, required=required,
                     help="experiment config JSON (see --print-config)")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "rounds", None) is not None:
        cfg.rounds = args.rounds
    if getattr(args, "trials", None) is not None:
        cfg.test_trials = args.trials
    if getattr(args, "out", None) is not None:
        cfg.output_dir = str(args.out)
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds]
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdi",
        description="Multi-modal GP imitation learning with optimized disturbance "
        "injection: training, evaluation, benchmark grids, and the live demo bridge.",
    )
    parser.add_argument("--print-config", action="store_true",
                        help="print the default experiment config as JSON and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", help="train one method/seed cell")
    _add_config_arg(p_train)
    p_train.add_argument("--method", required=True, choices=[m.value for m in MethodId])
    p_train.add_argument("--seed", type=int, required=True)
    p_train.add_argument("--rounds", type=int)
    p_train.add_argument("--out", type=Path)

    p_eval = sub.add_parser("eval", help="evaluate a model snapshot (or baselines)")
    _add_config_arg(p_eval)
    group = p_eval.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", type=Path, help="model snapshot JSON")
    group.add_argument("--expert", action="store_true", help="expert passthrough baseline")
    group.add_argument("--zero", action="store_true", help="zero-policy stub baseline")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--trials", type=int)
    p_eval.add_argument("--out", type=Path)

    p_bench = sub.add_parser("bench", help="run the full method x seed grid")
    _add_config_arg(p_bench)
    p_bench.add_argument("--out", type=Path)
    p_bench.add_argument("--seeds", nargs="*")

    p_export = sub.add_parser("export-plots", help="dump per-mode predictive bands as CSV")
    _add_config_arg(p_export)
    p_export.add_argument("--model", type=Path, required=True)
    p_export.add_argument("--seed", type=int, default=0)
    p_export.add_argument("--out", type=Path, required=True)

    p_serve = sub.add_parser("demo-serve", help="serve live demonstration sessions")
    p_serve.add_argument("--port", type=int, default=8712)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--config", type=Path, help="env config JSON (experiment schema)")
    p_serve.add_argument("--sigma2", type=float, default=0.0,
                         help="injection variance for new sessions")
    p_serve.add_argument("--model", type=Path,
                         help="read the injection variance from this model snapshot")
    p_serve.add_argument("--dataset", type=Path,
                         help="append accepted demonstrations to this dataset file")
    p_serve.add_argument("--tick-rate", type=float, default=20.0)
    p_serve.add_argument("--lockstep", action="store_true",
                         help="advance exactly one tick per step request (no ZOH watchdog)")
    p_serve.add_argument("--ui", type=Path, help="serve this directory at / (built frontend)")
    return parser


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_experiment_config(args.config), args)
    out = args.out or cfg.resolve_output_dir()
    model, trace, dataset, cdir = train_cell(cfg, MethodId(args.method), args.seed, out_dir=out)
    print(f"wrote {cdir / 'model.json'}, {cdir / 'dataset.json'}, {cdir / 'trace.json'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_experiment_config(args.config), args)
    trials = args.trials or cfg.test_trials
    if args.expert:
        rows = evaluate_expert(cfg.env, trials, args.seed, cfg.eval_start_perturbation)
        label = "expert"
    elif args.zero:
        rows = evaluate_zero(cfg.env, trials, args.seed, cfg.eval_start_perturbation)
        label = "zero"
    else:
        if not args.model.exists():
            raise InputError(f"model file not found: {args.model}")
        model = load_model(args.model)
        rows = evaluate_model(model, cfg.env, trials, args.seed, cfg.mode_policy,
                              cfg.eval_start_perturbation)
        label = "model"
    for row in rows:
        row.update(method=label, seed=args.seed)
    summary = summarize(rows)
    out = args.out or (args.model.parent if args.model else cfg.resolve_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"eval_{label}.csv", ["method", "seed", "trial", "score", "success"], rows)
    dump_json({"version": 1, "summary": summary, "trials": rows}, out / f"eval_{label}.json")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = _apply_overrides(load_experiment_config(args.config), args)
    out = args.out or cfg.resolve_output_dir()
    report = run_bench(cfg, out_dir=out)
    failed = [c for c in report["cells"] if c["status"] != "ok"]
    print(f"bench complete: {len(report['cells']) - len(failed)}/{len(report['cells'])} "
          f"cells ok; report at {out / 'report.json'}")
    for cell in failed:
        print(f"  FAILED {cell['method']} seed={cell['seed']}: {cell['error']}")
    return 0


def cmd_export(args) -> int:
    cfg = load_experiment_config(args.config)
    if not args.model.exists():
        raise InputError(f"model file not found: {args.model}")
    n = export_mode_bands(args.model, cfg, args.seed, args.out)
    print(f"wrote {n} rows to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .bridge import BridgeSettings, create_app

    sigma2 = args.sigma2
    if args.model is not None:
        model_doc = json.loads(Path(args.model).read_text())
        sigma2 = float(model_doc["noise_schedule"][-1])
    env = None
    if args.config is not None:
        env = load_experiment_config(args.config).env
    settings = BridgeSettings(
        env=env,
        sigma2=sigma2,
        tick_rate=args.tick_rate,
        realtime=not args.lockstep,
        dataset_path=args.dataset,
        ui_dir=args.ui,
    )
    app = create_app(settings)
    print(f"demo bridge on http://{args.host}:{args.port} (sigma2={sigma2:g})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "export-plots": cmd_export,
    "demo-serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.print_config:
        print(json.dumps(ExperimentConfig().to_dict(), indent=1, sort_keys=True))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BdiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
