"""Command-line entry point: ``convergence``, ``sweep`` and ``eval`` subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    LEARNING_APPROACHES,
    SWEEP_VARIABLES,
    ConfigError,
    ExperimentConfig,
    MetricsRecord,
    emit_csv,
    evaluate_bundle,
    run_convergence,
    run_realization,
    run_sweep,
)
from .learning import LearnerBundle


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of u64 range: {v}")
    return v


def _csv_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irs-antijam", description="IRS-assisted anti-jamming experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat JSON config; unknown keys are rejected")
    common.add_argument("--seed", type=_u64, help="base seed; realization r uses seed + r")
    common.add_argument("--out", type=Path, help="CSV output path")
    common.add_argument("--approaches", type=_csv_list, help="comma-separated approach ids")

    sub.add_parser("convergence", parents=[common], help="per-episode learning curves")
    sw = sub.add_parser("sweep", parents=[common], help="steady-state metrics across a swept parameter")
    sw.add_argument("--variable", required=True, choices=sorted(SWEEP_VARIABLES))
    sw.add_argument("--values", required=True, type=_csv_list)
    ev = sub.add_parser("eval", parents=[common], help="train, then roll out the greedy policy")
    ev.add_argument("--checkpoint", type=Path, help="save the trained learner here (npz)")
    ev.add_argument("--load", type=Path, help="skip training and evaluate this checkpoint")
    ev.add_argument("--eval-episodes", type=int, default=10)
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.approaches is not None:
        changes["approaches"] = tuple(args.approaches)
    return cfg.replace(**changes) if changes else cfg


def _parse_values(variable: str, raw: list[str]) -> list[float]:
    try:
        values = [float(v) for v in raw]
    except ValueError:
        raise ConfigError(f"non-numeric value in --values: {','.join(raw)}") from None
    if variable == "M" and any(v != int(v) or v < 1 for v in values):
        raise ConfigError("M values must be positive integers")
    return values


def _eval(cfg: ExperimentConfig, args) -> list[MetricsRecord]:
    if args.eval_episodes < 1:
        raise ConfigError("--eval-episodes must be >= 1")
    learners = [a for a in cfg.approaches if a in LEARNING_APPROACHES]
    if args.load is not None:
        if len(learners) != 1:
            raise ConfigError("--load needs exactly one learning approach in --approaches")
        bundle = LearnerBundle.load(args.load)
        pairs = [(learners[0], cfg.base_seed, bundle)]
    else:
        if not learners:
            raise ConfigError("eval needs at least one learning approach")
        pairs = []
        for a in learners:
            _, bundle = run_realization(cfg, a, cfg.base_seed, return_bundle=True)
            pairs.append((a, cfg.base_seed, bundle))
        if args.checkpoint is not None:
            if len(pairs) != 1:
                raise ConfigError("--checkpoint needs exactly one learning approach in --approaches")
            pairs[0][2].save(args.checkpoint)
    out = []
    for a, seed, bundle in pairs:
        for e in evaluate_bundle(cfg, bundle, seed, args.eval_episodes):
            out.append(MetricsRecord(a, "eval", 0.0, e.episode, seed, e.rate, e.protection, e.reward))
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "convergence":
            records = run_convergence(cfg)
        elif args.command == "sweep":
            records = run_sweep(cfg, args.variable, _parse_values(args.variable, args.values))
        else:
            records = _eval(cfg, args)
        emit_csv(records, cfg.out)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
