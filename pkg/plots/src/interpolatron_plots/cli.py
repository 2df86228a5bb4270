"""CLI: ``plots <kind> --inputs a.csv,b.csv --out fig.png [--log-y]
[--labels ...]``; ``trajectory-1d`` also takes ``--curve curve.csv``
(the harness's sampled landscape)."""

from __future__ import annotations

import argparse
import sys

from .render import (
    FigureSpec,
    SchemaError,
    plot_loss_curves,
    plot_sweep_panel,
    plot_trajectory_1d,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots", description="render figures from harness CSV outputs"
    )
    parser.add_argument(
        "kind", choices=["loss-curves", "trajectory-1d", "sweep-panel"]
    )
    parser.add_argument("--inputs", required=True, help="comma-separated CSV paths")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--labels", default=None, help="comma-separated legend labels")
    parser.add_argument("--log-y", action="store_true", help="log-scale loss axis")
    parser.add_argument("--x-axis", choices=["step", "epoch"], default="step")
    parser.add_argument("--curve", default=None, help="sampled landscape CSV (trajectory-1d)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            inputs=tuple(args.inputs.split(",")),
            kind=args.kind,
            out=args.out,
            labels=tuple(args.labels.split(",")) if args.labels else None,
            log_y=args.log_y,
            x_axis=args.x_axis,
        )
        if args.kind == "loss-curves":
            plot_loss_curves(spec)
        elif args.kind == "trajectory-1d":
            if args.curve is None:
                raise SchemaError("trajectory-1d requires --curve")
            plot_trajectory_1d(spec, args.curve)
        else:
            plot_sweep_panel(spec)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
