"""Command-line entry point.

Usage:
    lrrt-render render --spec PATH

Exit codes: 0 success, 1 usage error (bad arguments, unreadable or
invalid spec file), 2 render failure (missing columns, empty data,
unreadable CSVs).
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .render import RenderError, render_figures
from .specs import load_specs

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lrrt-render", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    p = sub.add_parser("render", help="render every figure in a spec file")
    p.add_argument("--spec", required=True, help="YAML figure spec path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
    except _UsageError:
        return 1

    try:
        specs = load_specs(args.spec)
    except (OSError, ValueError, TypeError, yaml.YAMLError) as exc:
        print(f"lrrt-render: error: {exc}", file=sys.stderr)
        return 1

    try:
        outputs = render_figures(specs)
    except RenderError as exc:
        print(f"lrrt-render: render failure: {exc}", file=sys.stderr)
        return 2
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
