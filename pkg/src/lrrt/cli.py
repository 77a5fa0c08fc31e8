"""Command-line entry point.

Usage:
    lrrt reference   --config PATH [--seed INT] [--workers INT] [--output PATH]
    lrrt mc-study    --config PATH [...]
    lrrt cv-study    --config PATH [...]
    lrrt alpha-table --config PATH [...]
    lrrt check

Exit codes: 0 success, 1 usage error (bad arguments, unreadable or
invalid config), 2 runtime failure.  The worker count resolves as
flag > LRRT_WORKERS environment variable > config key > CPU count.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
import yaml

from .dlra import solve_dlra
from .estimators import cv_estimate
from .fullrank import solve_full
from .harness import load_config, run_study, write_results
from .transport import GridSpec, InitialCondition, build_initial_condition, build_operators

__all__ = ["main", "run_check"]

STUDIES = ("reference", "mc-study", "cv-study", "alpha-table")


class _UsageError(Exception):
    def __init__(self, message: str, printed: bool = False) -> None:
        super().__init__(message)
        self.printed = printed


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; this tool reserves 2
    # for runtime failures, so usage problems unwind via an exception
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message, printed=True)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lrrt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in STUDIES:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", required=True, help="YAML config path")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--output", default=None, help="override output path")
    sub.add_parser("check", help="run the fast invariant suite")
    return parser


def _resolve_workers(flag: int | None) -> int | None:
    """flag > LRRT_WORKERS > None (fall through to config/auto)."""
    if flag is not None:
        return flag
    env = os.environ.get("LRRT_WORKERS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"LRRT_WORKERS must be an integer, got {env!r}")
    return None


def _check_line(name: str, ok: bool, detail: str) -> bool:
    status = "pass" if ok else "FAIL"
    print(f"check: {name:<28s} {status}  ({detail})")
    return ok


def run_check() -> int:
    """Fast invariant suite: orthonormality, equivalence, CV identity."""
    all_ok = True

    grid = GridSpec(m=51, n=16, t_end=0.5)
    ops = build_operators(grid)
    psi0 = build_initial_condition(grid, InitialCondition(nu=1.0, sigma=0.1, floor=1e-4))
    state = solve_dlra(ops, psi0, 6, grid)
    defect = state.orthonormality_defect()
    all_ok &= _check_line(
        "basis orthonormality", defect <= 1e-8, f"defect {defect:.2e} <= 1e-8"
    )

    tiny = GridSpec(m=21, n=6, t_end=0.3)
    ops_t = build_operators(tiny)
    psi0_t = build_initial_condition(tiny, InitialCondition(nu=1.0, sigma=0.1, floor=1e-4))
    dense = solve_full(ops_t, psi0_t, tiny)
    lowrank = solve_dlra(ops_t, psi0_t, 6, tiny)
    rel = float(
        np.linalg.norm(lowrank.dense() - dense.psi) / np.linalg.norm(dense.psi)
    )
    all_ok &= _check_line(
        "full-rank equivalence", rel <= 1e-9, f"relative error {rel:.2e} <= 1e-9"
    )

    hook = lambda nu: np.array([nu])  # noqa: E731
    exact_mean = np.array([1.0])
    report = cv_estimate(
        None, None, 0, 64, 1.0, None, 12345,
        fine_fn=hook, coarse_fn=hook, coarse_mean=exact_mean,
    )
    identity = float(np.max(np.abs(report.mean.phi - exact_mean)))
    ok = identity == 0.0 and report.mc_error == 0.0
    all_ok &= _check_line(
        "CV zero-variance identity", ok,
        f"mean offset {identity:.1e}, mc_error {report.mc_error:.1e}",
    )

    return 0 if all_ok else 2


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
        if args.command == "check":
            return run_check()
        workers = _resolve_workers(args.workers)
    except _UsageError as exc:
        if not exc.printed:
            print(f"lrrt: error: {exc}", file=sys.stderr)
        return 1

    try:
        cfg = load_config(
            args.config,
            study=args.command,
            master_seed=args.seed,
            workers=workers,
            output=args.output,
        )
    except (OSError, ValueError, TypeError, yaml.YAMLError) as exc:
        print(f"lrrt: error: {exc}", file=sys.stderr)
        return 1

    try:
        rows = run_study(cfg)
        if cfg.study != "reference":
            write_results(rows, cfg.output, cfg)
            print(f"wrote {len(rows)} rows to {cfg.output}", file=sys.stderr)
    except Exception as exc:  # noqa: BLE001 - boundary: report and signal failure
        print(f"lrrt: runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
