"""Command line entry point.

Subcommands:
    validate CONFIG       parse and check a config file
    run CONFIG            train the sweep; writes qd.csv, traces, checkpoints
    kshot CONFIG          few-shot robustness evaluation; writes kshot.csv
    plot QD_CSV OUT_SVG   render a quality-diversity scatter

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime
failure. All randomness derives from the config's master_seed, so a
repeated invocation rewrites identical bytes.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiment import run_experiment, run_kshot
from .plotting import plot_qd

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divset",
        description="Train and evaluate diverse near-optimal policy sets on tabular MDPs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("validate", "parse and check a config file"),
        ("run", "run the configured sweep"),
        ("kshot", "run the configured few-shot robustness evaluation"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a JSON experiment config")
    plot_p = sub.add_parser("plot", help="render qd.csv to an SVG scatter")
    plot_p.add_argument("qd_csv", help="path to a qd.csv written by `divset run`")
    plot_p.add_argument("out", help="output SVG path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            load_config(args.config)
            print(f"ok: {args.config}")
        elif args.command == "run":
            print(run_experiment(load_config(args.config)))
        elif args.command == "kshot":
            print(run_kshot(load_config(args.config)))
        else:
            print(plot_qd(args.qd_csv, args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report and set exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
