"""Experiment orchestration: reference runs, parameter sweeps, CSV output.

A study is described by a YAML config with a fixed key set, swept as a
Cartesian product; every cell yields one CSV row.  Cell failures are
recorded as rows with blank metrics so long sweeps survive isolated
numerical problems.  All cells are deterministic functions of (config,
seed) except the wall_time_s column.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .estimators import (
    EstimatorReport,
    cv_pipeline,
    mc_estimate,
    optimal_alpha,
    weighted_l2,
    _paired_scalar_stats,
)
from .fullrank import QoIVector
from .sampling import SampleEngine, stream_seed
from .transport import GridSpec, Physics

__all__ = [
    "ExperimentConfig",
    "ReferenceSolution",
    "ResultRow",
    "RESULT_COLUMNS",
    "load_config",
    "default_reference_config",
    "compute_reference",
    "save_reference",
    "load_reference",
    "compute_metrics",
    "run_study",
    "write_results",
    "read_results",
]

log = logging.getLogger("lrrt")

STUDY_KINDS = ("reference", "mc-study", "cv-study", "alpha-table")

RESULT_COLUMNS = (
    "study",
    "m",
    "n",
    "r",
    "s",
    "N",
    "N_diff",
    "alpha",
    "bias",
    "mc_error",
    "var_r",
    "var_s",
    "corr_rs",
    "wall_time_s",
    "seed",
)

_INT_COLUMNS = {"m", "n", "r", "s", "N", "N_diff", "seed"}


@dataclass
class ExperimentConfig:
    """Declarative description of one study sweep."""

    study: str
    m: list[int]
    n: int
    a: float = -1.5
    b: float = 1.5
    cfl: float = 1.0
    t_end: float = 1.0
    sigma: float = 0.1
    floor: float = 1e-4
    sigma_s: float = 1.0
    r: list[int] = field(default_factory=list)
    s: list[int] = field(default_factory=list)
    N: list[int] = field(default_factory=list)
    master_seed: int = 0
    pilot_N: int = 500
    warmup_N: int = 200
    replications: int = 1
    output: str = "results.csv"
    # worker process count; 0 or None means one per available CPU
    workers: int | None = None
    # path to a stored reference solution; enables the bias column
    reference: str | None = None
    cv_mode: str = "warmup"
    save_fields: bool = False

    def __post_init__(self) -> None:
        if self.study not in STUDY_KINDS:
            raise ValueError(
                f"unknown study kind {self.study!r}; expected one of {STUDY_KINDS}"
            )
        if not self.m:
            raise ValueError("m list must be non-empty")
        needs = {
            "reference": ("N",),
            "mc-study": ("r", "N"),
            "cv-study": ("r", "s", "N"),
            "alpha-table": ("r", "s"),
        }[self.study]
        for name in needs:
            if not getattr(self, name):
                raise ValueError(f"{name} list must be non-empty for {self.study}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.cv_mode not in ("pilot", "warmup"):
            raise ValueError(f"cv_mode must be 'pilot' or 'warmup', got {self.cv_mode!r}")

    def grid(self, m: int) -> GridSpec:
        return GridSpec(
            m=m, n=self.n, a=self.a, b=self.b, cfl=self.cfl, t_end=self.t_end
        )

    def effective_workers(self) -> int:
        if self.workers:
            return int(self.workers)
        return os.cpu_count() or 1

    def physics(self) -> Physics:
        return Physics(sigma=self.sigma, floor=self.floor, sigma_s=self.sigma_s)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path: str | Path, **overrides: Any) -> ExperimentConfig:
    """Parse a YAML config, rejecting unknown keys; overrides win."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"config {path} must be a mapping, got {type(raw).__name__}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {', '.join(unknown)}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    missing = sorted(k for k in ("study", "m", "n") if k not in raw)
    if missing:
        raise ValueError(f"config {path} missing required keys: {', '.join(missing)}")
    return ExperimentConfig(**raw)


def default_reference_config(output: str = "reference.csv") -> ExperimentConfig:
    """Desk-scale reference run: m = 401, 32 moments, 10^4 samples."""
    return ExperimentConfig(
        study="reference", m=[401], n=32, N=[10_000], output=output
    )


# ---------------------------------------------------------------------------
# reference solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSolution:
    """Stored full-rank MC mean on a fine grid, restrictable to nested grids."""

    phi_mean: QoIVector
    x: np.ndarray
    m: int
    n: int
    N: int
    master_seed: int
    mc_error: float
    meta: dict[str, float] = field(default_factory=dict)

    def restrict_to(self, m_coarse: int) -> QoIVector:
        """Exact point-sampling onto a nested grid with m_coarse points."""
        if m_coarse < 2 or (self.m - 1) % (m_coarse - 1) != 0:
            raise ValueError(
                f"grid with m={m_coarse} is not nested in reference m={self.m}"
            )
        stride = (self.m - 1) // (m_coarse - 1)
        dx = self.phi_mean.dx * stride
        return QoIVector(phi=self.phi_mean.phi[::stride].copy(), dx=dx)


def compute_reference(cfg: ExperimentConfig) -> ReferenceSolution:
    """Full-rank MC mean of the scalar flux on the reference grid.

    Parameter draws come from a dedicated "reference" sub-stream so they
    stay decorrelated from study streams sharing the master seed.
    """
    m = cfg.m[0]
    grid = cfg.grid(m)
    N = cfg.N[0]
    seed = int(stream_seed(cfg.master_seed, "reference"))
    with SampleEngine(grid, cfg.physics(), cfg.effective_workers()) as eng:
        report = mc_estimate(None, grid, N, seed, physics=cfg.physics(), engine=eng)
    return ReferenceSolution(
        phi_mean=report.mean,
        x=grid.x,
        m=m,
        n=cfg.n,
        N=N,
        master_seed=cfg.master_seed,
        mc_error=report.mc_error,
        meta={
            "a": cfg.a,
            "b": cfg.b,
            "cfl": cfg.cfl,
            "t_end": cfg.t_end,
            "sigma": cfg.sigma,
            "floor": cfg.floor,
            "sigma_s": cfg.sigma_s,
        },
    )


def save_reference(ref: ReferenceSolution, path: str | Path) -> None:
    """Persist as CSV with a '#' metadata line; byte-stable for fixed seed."""
    meta = {
        "m": ref.m,
        "n": ref.n,
        "N": ref.N,
        "master_seed": ref.master_seed,
        "mc_error": ref.mc_error,
        **ref.meta,
    }
    meta_line = "# lrrt-reference " + " ".join(
        f"{k}={_fmt(v)}" for k, v in meta.items()
    )
    lines = [meta_line, "x,phi_mean"]
    for xi, pi in zip(ref.x, ref.phi_mean.phi):
        lines.append(f"{_fmt(xi)},{_fmt(pi)}")
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def load_reference(path: str | Path) -> ReferenceSolution:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# lrrt-reference "):
            raise ValueError(f"{path} is not a stored reference solution")
        meta: dict[str, float] = {}
        for token in first[len("# lrrt-reference ") :].split():
            key, val = token.split("=", 1)
            meta[key] = float(val)
        header = fh.readline().strip()
        if header != "x,phi_mean":
            raise ValueError(f"{path} has unexpected header {header!r}")
        data = np.loadtxt(fh, delimiter=",").reshape(-1, 2)
    m = int(meta.pop("m"))
    n = int(meta.pop("n"))
    N = int(meta.pop("N"))
    seed = int(meta.pop("master_seed"))
    mc_error = float(meta.pop("mc_error"))
    x = data[:, 0]
    # endpoint form reproduces (b - a)/(m - 1) bit-for-bit; x[1] - x[0] can
    # land one ulp off after the text round trip
    dx = float((x[-1] - x[0]) / (len(x) - 1))
    return ReferenceSolution(
        phi_mean=QoIVector(phi=data[:, 1], dx=dx),
        x=x,
        m=m,
        n=n,
        N=N,
        master_seed=seed,
        mc_error=mc_error,
        meta=meta,
    )


def compute_metrics(
    report: EstimatorReport, ref: ReferenceSolution
) -> tuple[float, float]:
    """(bias, mc_error): dx-weighted L2 distance to the restricted reference."""
    m_report = len(report.mean.phi)
    restricted = ref.restrict_to(m_report)
    if not math.isclose(restricted.dx, report.mean.dx, rel_tol=1e-12):
        raise ValueError(
            f"grid spacing mismatch: report dx={report.mean.dx}, "
            f"restricted reference dx={restricted.dx}"
        )
    bias = weighted_l2(report.mean.phi - restricted.phi, report.mean.dx)
    return bias, report.mc_error


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class ResultRow:
    """One sweep cell; None renders as an empty CSV field."""

    study: str
    m: int
    n: int
    r: int | None = None
    s: int | None = None
    N: int | None = None
    N_diff: int | None = None
    alpha: float | None = None
    bias: float | None = None
    mc_error: float | None = None
    var_r: float | None = None
    var_s: float | None = None
    corr_rs: float | None = None
    wall_time_s: float | None = None
    seed: int | None = None


def _min_wall(run, replications: int) -> EstimatorReport:
    """Repeat a deterministic cell, keeping the smallest wall time."""
    report = run()
    best = report.wall_time
    for _ in range(replications - 1):
        best = min(best, run().wall_time)
    report.wall_time = best
    return report


def _bias_or_none(
    report: EstimatorReport, ref: ReferenceSolution | None
) -> float | None:
    if ref is None:
        return None
    return compute_metrics(report, ref)[0]


def _save_field(cfg: ExperimentConfig, tag: str, grid: GridSpec, phi: np.ndarray) -> None:
    out = Path(cfg.output)
    path = out.with_name(f"{out.stem}_field_{tag}.csv")
    lines = ["x,phi"]
    for xi, pi in zip(grid.x, phi):
        lines.append(f"{_fmt(xi)},{_fmt(pi)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def run_study(cfg: ExperimentConfig) -> list[ResultRow]:
    """Execute the configured sweep; failed cells become blank-metric rows."""
    if cfg.study == "reference":
        ref = compute_reference(cfg)
        save_reference(ref, cfg.output)
        log.info("reference written to %s (mc_error=%.3e)", cfg.output, ref.mc_error)
        return []

    ref = load_reference(cfg.reference) if cfg.reference else None
    rows: list[ResultRow] = []
    physics = cfg.physics()

    for m in cfg.m:
        grid = cfg.grid(m)
        with SampleEngine(grid, physics, cfg.effective_workers()) as eng:
            if cfg.study == "mc-study":
                rows.extend(_mc_cells(cfg, grid, eng, ref))
            elif cfg.study == "cv-study":
                rows.extend(_cv_cells(cfg, grid, eng, ref))
            else:
                rows.extend(_alpha_cells(cfg, grid, eng))
    return rows


def _mc_cells(cfg, grid, eng, ref) -> list[ResultRow]:
    rows = []
    for r in cfg.r:
        for N in cfg.N:
            row = ResultRow(
                study=cfg.study, m=grid.m, n=grid.n, r=r, N=N, seed=cfg.master_seed
            )
            try:
                report = _min_wall(
                    lambda: mc_estimate(
                        r, grid, N, cfg.master_seed, physics=cfg.physics(), engine=eng
                    ),
                    cfg.replications,
                )
                row.bias = _bias_or_none(report, ref)
                row.mc_error = report.mc_error
                row.var_r = report.var_fine
                row.wall_time_s = report.wall_time
                if cfg.save_fields:
                    _save_field(cfg, f"m{grid.m}_r{r}_N{N}", grid, report.mean.phi)
            except Exception as exc:  # noqa: BLE001 - error rows, not aborts
                log.error("cell (m=%d, r=%d, N=%d) failed: %s", grid.m, r, N, exc)
            rows.append(row)
            log.info("mc-study m=%d r=%d N=%d done", grid.m, r, N)
    return rows


def _cv_cells(cfg, grid, eng, ref) -> list[ResultRow]:
    rows = []
    for r in cfg.r:
        for s in cfg.s:
            for N in cfg.N:
                row = ResultRow(
                    study=cfg.study,
                    m=grid.m,
                    n=grid.n,
                    r=r,
                    s=s,
                    N=N,
                    seed=cfg.master_seed,
                )
                try:
                    report = _min_wall(
                        lambda: cv_pipeline(
                            cfg.cv_mode,
                            r,
                            s,
                            N,
                            grid,
                            cfg.master_seed,
                            pilot_N=cfg.pilot_N,
                            warmup_N=cfg.warmup_N,
                            physics=cfg.physics(),
                            engine=eng,
                        ),
                        cfg.replications,
                    )
                    row.N_diff = report.n_diff
                    row.alpha = report.alpha
                    row.bias = _bias_or_none(report, ref)
                    row.mc_error = report.mc_error
                    row.var_r = report.var_fine
                    row.var_s = report.var_coarse
                    row.corr_rs = report.corr
                    row.wall_time_s = report.wall_time
                except Exception as exc:  # noqa: BLE001
                    log.error(
                        "cell (m=%d, r=%d, s=%d, N=%d) failed: %s",
                        grid.m, r, s, N, exc,
                    )
                rows.append(row)
                log.info("cv-study m=%d r=%d s=%d N=%d done", grid.m, r, s, N)
    return rows


def _alpha_cells(cfg, grid, eng) -> list[ResultRow]:
    """Pilot-pair alpha* for every (s, r) combination.

    All combinations share one pilot nu stream, so each distinct rank is
    solved once per nu and reused across pairs.
    """
    pilot_seed = int(stream_seed(cfg.master_seed, "pilot"))
    nus = eng.draw_many(pilot_seed, 0, cfg.pilot_N)
    ranks = sorted(set(cfg.r) | set(cfg.s))
    fields_by_rank: dict[int, np.ndarray] = {}
    solve_time: dict[int, float] = {}
    rows = []
    for rank in ranks:
        tic = time.perf_counter()
        fields_by_rank[rank], _ = eng.map_qoi(nus, rank)
        solve_time[rank] = time.perf_counter() - tic
        log.info(
            "alpha-table rank %d: %d solves in %.1fs",
            rank, cfg.pilot_N, solve_time[rank],
        )
    for s in cfg.s:
        for r in cfg.r:
            row = ResultRow(
                study=cfg.study,
                m=grid.m,
                n=grid.n,
                r=r,
                s=s,
                N=cfg.pilot_N,
                seed=cfg.master_seed,
            )
            try:
                if s >= r:
                    raise ValueError(f"coarse rank must satisfy s < r, got s={s}, r={r}")
                tic = time.perf_counter()
                stats = _paired_scalar_stats(
                    fields_by_rank[r], fields_by_rank[s], grid.dx
                )
                row.alpha = optimal_alpha(stats.cov, stats.var_coarse)
                row.var_r = stats.var_fine
                row.var_s = stats.var_coarse
                row.corr_rs = stats.corr
                # standalone cost of this pair: its two rank sweeps + stats
                row.wall_time_s = (
                    time.perf_counter() - tic + solve_time[r] + solve_time[s]
                )
            except Exception as exc:  # noqa: BLE001
                log.error("cell (s=%d, r=%d) failed: %s", s, r, exc)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    finally:
        if tmp.exists():
            tmp.unlink()


def write_results(
    rows: list[ResultRow], path: str | Path, config: ExperimentConfig | None = None
) -> None:
    """Write the result CSV plus a sidecar config echo for provenance."""
    path = Path(path)
    lines = [",".join(RESULT_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                row.study if col == "study" else _fmt(getattr(row, col))
                for col in RESULT_COLUMNS
            )
        )
    _atomic_write(path, "\n".join(lines) + "\n")
    if config is not None:
        echo = yaml.safe_dump(config.as_dict(), sort_keys=True, default_flow_style=False)
        _atomic_write(path.with_name(path.name + ".config.yaml"), echo)


def read_results(path: str | Path) -> list[ResultRow]:
    """Parse a results CSV back into rows (blank fields become None)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ",".join(RESULT_COLUMNS):
            raise ValueError(f"{path} has unexpected header {header!r}")
        rows = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(RESULT_COLUMNS):
                raise ValueError(
                    f"{path}: expected {len(RESULT_COLUMNS)} columns, got {len(parts)}"
                )
            kwargs: dict[str, Any] = {}
            for col, part in zip(RESULT_COLUMNS, parts):
                if col == "study":
                    kwargs[col] = part
                elif part == "":
                    kwargs[col] = None
                elif col in _INT_COLUMNS:
                    kwargs[col] = int(part)
                else:
                    kwargs[col] = float(part)
            rows.append(ResultRow(**kwargs))
    return rows
