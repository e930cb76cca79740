"""Command-line entry point: generate / train / infer / eval / sweep /
complexity / plot over JSON experiment configs.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
The CSIDIFF_OUTPUT_ROOT environment variable, when set, re-roots all
relative output paths; nothing else is read from the environment.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from . import chansim, evalkit, pipeline
from .config import ExperimentConfig, load_experiment, paper_model_spec
from .errors import ConfigError, CsidiffError, DataError
from .pipeline import InferConfig, MODEL_NAMES
from .profiles import load_profiles

OUTPUT_ROOT_ENV = "CSIDIFF_OUTPUT_ROOT"


def _out_path(p: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(p)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _load(args) -> ExperimentConfig:
    return load_experiment(args.config, seed_override=args.seed)


def _plan(args, cfg: ExperimentConfig, outputs: dict) -> None:
    plan = {
        "command": args.command,
        "config": str(args.config) if getattr(args, "config", None) else None,
        "seed": cfg.seed if cfg is not None else args.seed,
        "sections": [
            name for name in ("channel", "dataset", "model", "train", "infer", "eval")
            if cfg is not None and getattr(cfg, name) is not None
        ],
        "outputs": {k: str(v) for k, v in outputs.items()},
    }
    print(json.dumps(plan, indent=2, sort_keys=True))


def _cmd_generate(args) -> int:
    cfg = _load(args)
    channel, dataset = cfg.require("channel", "dataset")
    out = _out_path(args.out)
    if args.dry_run:
        _plan(args, cfg, {"dataset": out})
        return 0
    bundle = chansim.build_dataset(
        channel,
        load_profiles(dataset.profiles),
        dataset.num_samples,
        n_past=dataset.n_past,
        n_future=dataset.n_future,
        split_fracs=dataset.split_fracs,
        seed=dataset.seed,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    chansim.write_dataset(bundle, out)
    sizes = {k: v[0].shape[0] for k, v in bundle.splits.items()}
    print(f"wrote {out} (splits: {sizes})")
    return 0


def _cmd_train(args) -> int:
    cfg = _load(args)
    spec, tcfg = cfg.require("model", "train")
    out = _out_path(args.out)
    log_path = out.with_suffix(out.suffix + ".metrics.jsonl")
    if args.dry_run:
        _plan(args, cfg, {"checkpoint": out, "metrics": log_path})
        return 0
    data = chansim.read_dataset(args.data)
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt = pipeline.train(spec, data, tcfg, log_path=log_path)
    pipeline.save_checkpoint(ckpt, out)
    print(f"trained {spec.name} for {ckpt.step} steps; wrote {out}")
    return 0


def _infer_config(cfg: ExperimentConfig, args) -> InferConfig:
    icfg = cfg.infer if cfg is not None and cfg.infer is not None else InferConfig()
    if getattr(args, "steps", None) is not None:
        icfg = InferConfig(
            num_sample_steps=args.steps,
            zeta=icfg.zeta,
            feedback_noise_sigma=icfg.feedback_noise_sigma,
            inference_snr_db=icfg.inference_snr_db,
        )
    return icfg


def _cmd_infer(args) -> int:
    cfg = load_experiment(args.config, seed_override=args.seed) if args.config else None
    ckpt = pipeline.load_checkpoint(args.ckpt)
    if args.mode != ckpt.spec.inference_mode:
        raise ConfigError(
            f"--mode {args.mode} does not match checkpoint {ckpt.spec.name} "
            f"({ckpt.spec.inference_mode})"
        )
    icfg = _infer_config(cfg, args)
    out = _out_path(args.out)
    if args.dry_run:
        _plan(args, cfg, {"table": out})
        return 0
    data = chansim.read_dataset(args.data)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    ecfg = evalkit.EvalConfig(
        snr_grid_db=(args.snr if args.snr is not None else math.inf,),
        horizon=ckpt.spec.n_future,
        num_test_samples=args.num_samples,
        seed=seed,
    )
    table = evalkit.evaluate(ckpt, data, ecfg, icfg)
    evalkit.export_csv(table, out)
    print(f"wrote {out} ({len(table.rows)} rows)")
    return 0


def _stub_predictor(kind: str, data, horizon: int):
    if kind == "oracle":
        return evalkit.OracleStub(data)
    return evalkit.ZeroStub(horizon)


def _cmd_eval(args) -> int:
    cfg = _load(args)
    ecfg = cfg.require("eval")
    out_dir = _out_path(args.out)
    csv_path = out_dir / "results.csv"
    if args.dry_run:
        _plan(args, cfg, {"table": csv_path, "figures": out_dir})
        return 0
    data = chansim.read_dataset(args.data)
    if args.stub:
        model = _stub_predictor(args.stub, data, ecfg.horizon)
    else:
        if not args.ckpt:
            raise ConfigError("eval needs --ckpt (or --stub for the metric-path check)")
        model = pipeline.make_predictor(pipeline.load_checkpoint(args.ckpt), _infer_config(cfg, args))
    table = evalkit.evaluate(model, data, ecfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    evalkit.export_csv(table, csv_path)
    report = evalkit.emit_plots(table, out_dir)
    print(f"wrote {csv_path} ({len(table.rows)} rows) and {len(report['figures'])} figures")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    ecfg = cfg.require("eval")
    out_dir = _out_path(args.out)
    csv_path = out_dir / f"sweep_{args.kind}.csv"
    if args.dry_run:
        _plan(args, cfg, {"table": csv_path, "figures": out_dir})
        return 0
    ckpt = pipeline.load_checkpoint(args.ckpt)
    predictor = pipeline.make_predictor(ckpt, _infer_config(cfg, args))
    data = chansim.read_dataset(args.data)
    if args.kind == "snr":
        table = evalkit.evaluate(predictor, data, ecfg)
    elif args.kind == "velocity":
        channel, dataset = cfg.require("channel", "dataset")
        table = evalkit.sweep_velocity(
            predictor, channel, ecfg, load_profiles(dataset.profiles), scaler=data.scaler,
        )
    elif args.kind == "context":
        table = evalkit.sweep_context(predictor, data, ecfg)
    else:
        table = evalkit.sweep_sampling_steps(predictor, data, ecfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    evalkit.export_csv(table, csv_path)
    report = evalkit.emit_plots(table, out_dir)
    print(f"wrote {csv_path} ({len(table.rows)} rows) and {len(report['figures'])} figures")
    return 0


def _cmd_complexity(args) -> int:
    cfg = _load(args) if args.config else None
    if cfg is not None and cfg.model is not None:
        specs = [cfg.model]
    else:
        specs = [paper_model_spec(name) for name in MODEL_NAMES]
    if args.dry_run:
        _plan(args, cfg, {"table": args.out or "-"})
        return 0
    report = evalkit.complexity_report(specs)
    lines = [f"{'model':<14}{'params':>12}{'est_flops':>16}"]
    for row in report:
        lines.append(f"{row['model']:<14}{row['params']:>12}{row['est_flops']:>16}")
    print("\n".join(lines))
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["model", "params", "est_flops"])
            for row in report:
                w.writerow([row["model"], row["params"], row["est_flops"]])
        print(f"wrote {out}")
    return 0


def _cmd_plot(args) -> int:
    out_dir = _out_path(args.out)
    if args.dry_run:
        _plan(args, None, {"figures": out_dir})
        return 0
    table = evalkit.read_csv(args.table)
    report = evalkit.emit_plots(table, out_dir)
    print(f"wrote {len(report['figures'])} figures to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csidiff",
        description="Synthetic CSI datasets, diffusion-based CSI predictors, and NMSE benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override every config seed")
        p.add_argument("--dry-run", action="store_true", help="validate and print the plan only")

    p = sub.add_parser("generate", help="generate a channel dataset file")
    common(p)
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a model on a dataset file")
    common(p)
    p.add_argument("--data", required=True, help="dataset file from `generate`")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="run inference and write a per-step NMSE table")
    common(p, config_required=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", required=True, choices=("ar", "seq2seq", "direct"))
    p.add_argument("--steps", type=int, default=None, help="DDIM sampling steps")
    p.add_argument("--snr", type=float, default=None, help="context corruption SNR (dB); omit for clean")
    p.add_argument("--num-samples", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="full SNR-grid evaluation with CSV and figures")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--stub", choices=("oracle", "zero"), default=None,
                   help="evaluate a stub predictor instead of a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="figure-axis sweeps over one checkpoint")
    common(p)
    p.add_argument("--kind", required=True, choices=("snr", "velocity", "context", "steps"))
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("complexity", help="parameter/FLOP report at paper configuration")
    common(p, config_required=False)
    p.add_argument("--out", default=None, help="optional CSV path")
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("plot", help="re-render figures from a result CSV")
    p.add_argument("--table", required=True, help="CSV from eval/sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_plot)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (CsidiffError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
