"""Command-line entry point: ``pararcnn {train,eval,explain,sweep,synth}``.

Every command reads a YAML config (``--config``); flags override it.  Outputs
go to a fixed layout inside the run directory::

    config.resolved  checkpoint.prcn  train_report.txt  metrics.txt
    saliency.txt     sweep_<param>.txt
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigParseError, RunConfig, SweepSection, apply_overrides, load_config
from .data import synth_generate, write_frame
from .errors import ConfigError
from .evaluation import evaluate
from .explain import TargetSelector, grad_cam
from .network import load_params, save_params
from .pipeline import fit, prepare
from .sweeps import SWEEP_PARAMS, SweepSpec, reduced, run_sweep

log = logging.getLogger("pararcnn")

CONFIG_FILE = "config.resolved"
CHECKPOINT_FILE = "checkpoint.prcn"
REPORT_FILE = "train_report.txt"
METRICS_FILE = "metrics.txt"
SALIENCY_FILE = "saliency.txt"


class UsageError(Exception):
    """Bad command-line arguments that are not config errors."""


def _out_dir(run: RunConfig) -> Path:
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(run: RunConfig, args) -> int:
    out = _out_dir(run)
    run.dump(out / CONFIG_FILE)
    prepared = prepare(run)
    params, report = fit(run, prepared)
    save_params(params, out / CHECKPOINT_FILE)
    report.write(out / REPORT_FILE)
    print(f"trained {prepared.model_cfg.n_layers}-layer model: best epoch {report.best_epoch}, "
          f"val loss {report.best_val_loss:.6g}, stopped at {report.stopped_epoch}")
    print(f"wrote {out / CHECKPOINT_FILE}, {out / REPORT_FILE}, {out / CONFIG_FILE}")
    return 0


def _checkpoint(run: RunConfig, args) -> Path:
    return Path(args.checkpoint) if args.checkpoint else Path(run.out) / CHECKPOINT_FILE


def cmd_eval(run: RunConfig, args) -> int:
    prepared = prepare(run)
    params = load_params(_checkpoint(run, args), prepared.model_cfg)
    result = evaluate(params, prepared.model_cfg, prepared.test, prepared.stats)
    out = _out_dir(run)
    result.write(out / METRICS_FILE)
    sys.stdout.write(result.to_text())
    return 0


def _selector(prepared, targets: str, horizons: str) -> TargetSelector:
    target_names = [prepared.frame.names[i] for i in prepared.frame.target_columns]
    sel_t = None
    if targets and targets != "all":
        sel_t = []
        for name in targets.split(","):
            name = name.strip()
            if name not in target_names:
                raise UsageError(f"unknown target {name!r}; targets are {target_names}")
            sel_t.append(target_names.index(name))
    sel_h = None
    if horizons and horizons != "all":
        try:
            sel_h = [int(h) - 1 for h in horizons.split(",")]
        except ValueError:
            raise UsageError(f"horizons must be 1-based integers, got {horizons!r}") from None
    return TargetSelector(sel_t, sel_h)


def cmd_explain(run: RunConfig, args) -> int:
    prepared = prepare(run)
    params = load_params(_checkpoint(run, args), prepared.model_cfg)
    n = len(prepared.test)
    if not 0 <= args.instance < n:
        raise UsageError(f"instance index {args.instance} out of range for {n} test instances")
    selector = _selector(prepared, args.targets, args.horizons)
    smap = grad_cam(params, prepared.model_cfg, prepared.test[args.instance], selector,
                    column_labels=prepared.labels, shift=run.window.s)
    out = _out_dir(run)
    smap.write(out / SALIENCY_FILE)
    smap.write(out / "saliency_raw.txt", which="raw")
    smap.write(out / "saliency_gradient.txt", which="gradient")
    if smap.all_zero:
        print("warning: saliency map is all zero", file=sys.stderr)
    ranked = sorted(smap.column_importance().items(), key=lambda kv: -kv[1])
    for label, value in ranked:
        print(f"{label},{value:.6g}")
    return 0


def _parse_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_sweep(run: RunConfig, args) -> int:
    section = run.sweep or SweepSection()
    param = args.param or section.param
    values = _parse_list(args.values) if args.values else list(section.values)
    seeds = [int(s) for s in _parse_list(args.seeds)] if args.seeds else list(section.seeds)
    base = run if args.full_width else reduced(run)
    spec = SweepSpec(param, values, seeds, base)
    out = _out_dir(run)
    run.dump(out / CONFIG_FILE)
    result = run_sweep(spec)
    rows, summary = result.write(out)
    sys.stdout.write(result.summary_text())
    print(f"wrote {rows}, {summary}")
    return 0


def cmd_synth(run: RunConfig, args) -> int:
    synth = run.data.synth
    if synth is None:
        raise ConfigError("synth needs a data.synth section in the config")
    frame = synth_generate(synth.seed, synth.T, synth.noise_scale)
    target = Path(args.output) if args.output else _out_dir(run) / "data.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_frame(frame, target)
    print(f"wrote {len(frame)} rows to {target}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "explain": cmd_explain, "sweep": cmd_sweep,
            "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pararcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--deterministic", action="store_true", default=None)
    common.add_argument("--out", help="output directory")
    common.add_argument("--shift", type=int, help="shift length s")
    common.add_argument("--layers", type=int, help="number of layers (halving width rule)")
    common.add_argument("--skip", help="skip strategy: once, dense, ltonext, ltoinput, none")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("train", parents=[common], help="train a model")
    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on the test split")
    p.add_argument("--checkpoint")
    p = sub.add_parser("explain", parents=[common], help="saliency map for one test instance")
    p.add_argument("--checkpoint")
    p.add_argument("--instance", type=int, default=0, help="index into the test split")
    p.add_argument("--targets", default="all", help="'all' or comma-separated target names")
    p.add_argument("--horizons", default="all", help="'all' or comma-separated 1-based steps")
    p = sub.add_parser("sweep", parents=[common], help="one-parameter study")
    p.add_argument("--param", choices=SWEEP_PARAMS)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--full-width", action="store_true", help="use the configured widths instead of widths divided by 8")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic data file")
    p.add_argument("--output", help="file to write (default: <out>/data.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config)
        run = apply_overrides(run, seed=args.seed, deterministic=args.deterministic, out=args.out,
                              shift=args.shift, layers=args.layers, skip=args.skip)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](run, args)
    except (OSError, ValueError, RuntimeError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
