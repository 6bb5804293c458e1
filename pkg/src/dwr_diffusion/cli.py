"""Command line front end: run the adaptation loop from a parameter file.

Exit codes: 0 when the goal tolerance was reached, 2 when the loop budget
was exhausted first, 1 on any error (bad parameter file, solver failure,
I/O problems).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .driver import dwr_loop
from .output import OutputWriter
from .params import ParameterFileError, parse_parameter_file
from .sparse_la import SolverError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dwr-diffusion",
        description=(
            "Goal-oriented space-time adaptive solver for the instationary "
            "diffusion equation"
        ),
    )
    parser.add_argument("parameter_file", help="run configuration (text parameter file)")
    parser.add_argument("--out", default="output", help="output directory (default: ./output)")
    parser.add_argument("--max-loops", type=int, default=None,
                        help="override the adaptation loop budget")
    parser.add_argument("--vtk-every", type=int, default=None,
                        help="write VTK fields every k-th loop (0: final loop only)")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
    )
    try:
        config = parse_parameter_file(args.parameter_file)
        if args.max_loops is not None:
            config = dataclasses.replace(
                config, adapt=dataclasses.replace(config.adapt, max_loops=args.max_loops)
            )
        if args.vtk_every is not None:
            config = dataclasses.replace(
                config, output=dataclasses.replace(config.output, vtk_every=args.vtk_every)
            )
        writer = OutputWriter(args.out, vtk_every=config.output.vtk_every)
        result = dwr_loop(config, on_loop=writer.on_loop)
        writer.finish(result.records)
    except (ParameterFileError, SolverError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    last = result.records[-1]
    status = "goal reached" if result.converged else "loop budget exhausted"
    print(
        f"{status} after loop {last.loop}: goal error {last.goal_error:.6e} "
        f"(target {result.tol_absolute:.6e}), outputs in {args.out}"
    )
    return 0 if result.converged else 2


if __name__ == "__main__":
    sys.exit(main())
