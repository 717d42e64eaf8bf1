"""Render the three-panel figure from a run directory.

    plot_figure1 <run_dir> --out fig1.png [--times t1,t2,...] [--paths N]

Reads only evolution.csv and paths.csv.  Schema mismatches exit nonzero and
print the column diff; empty filters exit nonzero with a no_rows error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .panels import NoRowsError, SchemaError, render_grid


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot_figure1", description=__doc__.splitlines()[0])
    parser.add_argument("run_dir", help="directory holding evolution.csv and paths.csv")
    parser.add_argument("--out", default="fig1.png", help="output image path")
    parser.add_argument("--times", default=None, help="comma-separated times to render")
    parser.add_argument("--paths", type=int, default=None, help="max sample paths per panel")
    args = parser.parse_args(argv)

    evolution_csv = os.path.join(args.run_dir, "evolution.csv")
    paths_csv = os.path.join(args.run_dir, "paths.csv")
    for path in (evolution_csv, paths_csv):
        if not os.path.exists(path):
            print(f"error: missing input file {path}", file=sys.stderr)
            return 2
    times = None
    if args.times:
        times = [float(v) for v in args.times.split(",")]
    try:
        render_grid(evolution_csv, paths_csv, args.out, times=times, max_paths=args.paths)
    except SchemaError as exc:
        print(f"error: schema mismatch: {exc}", file=sys.stderr)
        return 2
    except NoRowsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
