"""Command-line figure renderer: plot --kind ... --in ... --out ..."""

from __future__ import annotations

import argparse
import sys

from ristrack_plots.figures import FIGURE_KINDS, FigureSpec, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ristrack-plot",
                                     description="render simulator CSVs as figures")
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="inputs", required=True, action="append",
                        help="input CSV (repeat for overlays)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--label", action="append", default=[],
                        help="legend label per input (repeat)")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                          labels=args.label)
        path = render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
