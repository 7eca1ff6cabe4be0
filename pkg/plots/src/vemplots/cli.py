"""Command-line interface: one subcommand per plot kind."""

from __future__ import annotations

import argparse
import sys

from .render import SchemaError, plot_convergence, plot_eigenfunction, plot_sweep


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vemplots", description="Render figures from vemeig CSV artifacts"
    )
    sub = parser.add_subparsers(dest="kind", required=True)

    p_conv = sub.add_parser("convergence", help="log-log eigenvalue error plot")
    p_conv.add_argument("--csv", required=True)
    p_conv.add_argument("--out", required=True, help="output image (SVG default)")
    p_conv.add_argument(
        "--slopes", default="", help="comma-separated reference slopes to draw"
    )

    p_sweep = sub.add_parser("sweep", help="spectrum vs stabilization parameter")
    p_sweep.add_argument("--csv", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--window", type=float, default=None)

    p_eig = sub.add_parser("eigenfunction", help="triangulated contour render")
    p_eig.add_argument("--csv", required=True)
    p_eig.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.kind == "convergence":
            slopes = [float(s) for s in args.slopes.split(",") if s]
            plot_convergence(args.csv, args.out, slopes)
        elif args.kind == "sweep":
            plot_sweep(args.csv, args.out, args.window)
        else:
            plot_eigenfunction(args.csv, args.out)
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
