"""Command line front end: plot --family <f> --filter k=v --in s.csv --out f.svg"""

from __future__ import annotations

import argparse
import sys

from .figures import FAMILIES, FigureSpec, RenderError, render
from .summary import SummaryError


def _parse_filters(pairs: list[str]) -> dict:
    filters = {}
    for pair in pairs:
        if "=" not in pair:
            raise RenderError(f"filter must look like column=value, got {pair!r}")
        key, value = pair.split("=", 1)
        filters[key.strip()] = value.strip()
    return filters


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render figures from a sweep summary CSV."
    )
    parser.add_argument("--family", required=True, choices=FAMILIES,
                        help="figure family to draw")
    parser.add_argument("--filter", action="append", default=[],
                        metavar="COLUMN=VALUE",
                        help="row predicate, repeatable; all must match")
    parser.add_argument("--in", dest="summary", required=True,
                        help="summary.csv produced by the sweep harness")
    parser.add_argument("--out", required=True, help="output figure path")
    parser.add_argument("--png", action="store_true",
                        help="write PNG instead of the default SVG")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(family=args.family, filters=_parse_filters(args.filter))
        result = render(args.summary, spec, args.out, png=args.png)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SummaryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    note = f" ({result.caption})" if result.caption else ""
    print(f"wrote {result.out_path}: {len(result.points)} series/points{note}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
