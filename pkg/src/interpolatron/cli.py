"""Command-line entry point.

Subcommands: run, compare, toy, certify, sweep.  Common flags:
--config <path>, --out <dir>, --seed <int> (overrides the config's seed
list), --quiet.  Exit codes: 0 success, 1 config error, 2 every run
diverged, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .harness import run_certify, run_compare, run_single, run_sweep, run_toy

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ALL_DIVERGED = 2
EXIT_INTERNAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interpolatron",
        description="seeded optimizer experiments: traces, comparisons, toy dynamics, rate certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "single experiment (one configured optimizer)"),
        ("compare", "run all configured optimizers and summarize"),
        ("toy", "escape/overshoot dynamics grid on a 1-D landscape"),
        ("certify", "linear-rate certificate on a quadratic"),
        ("sweep", "sensitivity grids over mixing weights and rates"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config's seeds")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(text)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            config = dataclasses.replace(config, seeds=(args.seed,))
        if args.command == "run":
            records = run_single(config, args.out, quiet=args.quiet)
            if all(r.result.diverged for r in records):
                return EXIT_ALL_DIVERGED
        elif args.command == "compare":
            report = run_compare(config, args.out, quiet=args.quiet)
            if report.all_diverged:
                return EXIT_ALL_DIVERGED
        elif args.command == "toy":
            run_toy(config, args.out, quiet=args.quiet)
        elif args.command == "certify":
            run_certify(config, args.out, quiet=args.quiet)
        elif args.command == "sweep":
            run_sweep(config, args.out, quiet=args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # invalid command/problem pairing and similar usage mistakes
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - map anything else to exit 3
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
