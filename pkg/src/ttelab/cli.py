"""Command-line entry point: run experiments, validate configs, emit figure data.

Exit codes: 0 success, 1 invalid config or bad usage, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    PAPER_SCALE_REPLICATIONS,
    ConfigError,
    ExperimentConfig,
    emit_figure_data,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttelab",
        description="Simulate interference experiments and estimate effect paths.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run all replications of a configured experiment")
    run.add_argument("--config", required=True, help="path to a JSON config file")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument(
        "--replications", type=int, default=None, help="override the replication count"
    )
    run.add_argument(
        "--paper-scale",
        action="store_true",
        help=f"use {PAPER_SCALE_REPLICATIONS} replications",
    )
    run.add_argument("--out", default=None, help="override the output directory")

    fig = sub.add_parser("figure", help="emit one tidy figure CSV from a finished run")
    fig.add_argument("--id", required=True, dest="figure_id", help="fig2..fig5")
    fig.add_argument("--in", required=True, dest="run_dir", help="run output directory")
    fig.add_argument("--out", default=None, help="output CSV path")

    val = sub.add_parser("validate", help="check a config file and exit")
    val.add_argument("--config", required=True, help="path to a JSON config file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            config = ExperimentConfig.from_json(args.config)
            config.validate()
            print(f"config ok: {args.config}")
            return 0
        if args.command == "run":
            config = ExperimentConfig.from_json(args.config)
            if args.seed is not None:
                config.master_seed = args.seed
            if args.replications is not None:
                config.replications = args.replications
            if args.paper_scale:
                config.replications = PAPER_SCALE_REPLICATIONS
            if args.out is not None:
                config.output_dir = args.out
            config.validate()
            result = run_experiment(config)
            print(
                f"wrote {result.output_dir}: "
                f"{result.n_success} succeeded, {result.n_failed} failed"
            )
            return 0 if result.n_success > 0 else 2
        if args.command == "figure":
            out = args.out or str(Path(args.run_dir) / f"{args.figure_id}.csv")
            path = emit_figure_data(args.run_dir, args.figure_id, out)
            print(f"wrote {path}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
