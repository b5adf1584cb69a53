"""Command line entry: regenerate result figures from experiment CSV files."""
from __future__ import annotations

import argparse
import sys

from .render import FIGURE_IDS, FigureSpec, RenderError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render a result figure from simulate CSV output")
    parser.add_argument("--figure", required=True, choices=FIGURE_IDS,
                        help="which figure to regenerate")
    parser.add_argument("--csv", required=True, action="append",
                        help="input CSV (records file, or trace files for "
                             "convergence); repeatable")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--label", action="append", default=[],
                        help="legend label per --csv (repeatable)")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)

    try:
        spec = FigureSpec(figure=args.figure, csv_paths=args.csv, out_path=args.out,
                          labels=args.label, title=args.title)
        render(spec)
    except (RenderError, OSError) as err:
        print(f"plot error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
