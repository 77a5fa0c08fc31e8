"""Deterministic sample streams and the per-sample solve engine.

Every random draw is a pure function of (seed, sample_index): a fresh
counter-keyed generator is built per draw, so samples can be computed in
any order, on any number of workers, with identical results.  Named
sub-streams (difference pairs, coarse-only samples, pilot pairs, ...)
are derived from the master seed so the estimator terms that must be
independent consume disjoint randomness.
"""

from __future__ import annotations

import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dlra import lowrank_qoi, solve_dlra
from .fullrank import QoIVector, scalar_flux, solve_full
from .transport import (
    GridSpec,
    Physics,
    PnOperators,
    build_initial_condition,
    build_operators,
)

__all__ = [
    "UncertainParameter",
    "SampleRecord",
    "SampleFailedError",
    "draw_parameter",
    "stream_seed",
    "SampleEngine",
]


@dataclass(frozen=True)
class UncertainParameter:
    """One realization of the uniform amplitude nu."""

    nu: float
    low: float = 0.5
    high: float = 1.5
    sample_index: int = 0
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError(f"empty range [{self.low}, {self.high}]")
        if not self.low <= self.nu <= self.high:
            raise ValueError(
                f"nu={self.nu} outside [{self.low}, {self.high}]"
            )


@dataclass
class SampleRecord:
    """One correlated (fine, coarse) QoI evaluation at a shared nu."""

    nu: UncertainParameter
    qoi_fine: QoIVector
    qoi_coarse: QoIVector | None = None
    rank_fine: int | None = None
    rank_coarse: int | None = None
    wall_time_fine: float = 0.0
    wall_time_coarse: float = 0.0


def draw_parameter(
    master_seed: int, sample_index: int, low: float = 0.5, high: float = 1.5
) -> UncertainParameter:
    """Counter-based uniform draw, reproducible and order-independent."""
    if not low < high:
        raise ValueError(f"need low < high, got [{low}, {high}]")
    if master_seed < 0 or sample_index < 0:
        raise ValueError("seed and sample index must be nonnegative")
    rng = np.random.default_rng((master_seed, sample_index))
    nu = float(rng.uniform(low, high))
    return UncertainParameter(
        nu=nu, low=low, high=high, sample_index=sample_index, master_seed=master_seed
    )


def stream_seed(master_seed: int, stream: str) -> int:
    """Deterministic sub-seed for a named stream of the master seed."""
    if master_seed < 0:
        raise ValueError("master seed must be nonnegative")
    tag = zlib.crc32(stream.encode("utf-8"))
    return int(np.random.SeedSequence((master_seed, tag)).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# worker-pool plumbing: operators are rebuilt once per worker process and
# cached per (grid, physics); tasks then carry only (nu, ranks)

_WORKER_CACHE: dict[tuple, tuple[GridSpec, Physics, PnOperators]] = {}


def _get_context(grid: GridSpec, physics: Physics):
    key = (grid, physics)
    ctx = _WORKER_CACHE.get(key)
    if ctx is None:
        ctx = (grid, physics, build_operators(grid, physics.sigma_s))
        _WORKER_CACHE.clear()
        _WORKER_CACHE[key] = ctx
    return ctx


def _limit_worker_threads() -> None:
    # one BLAS thread per worker; the pool provides the parallelism
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


class SampleFailedError(RuntimeError):
    """A per-sample solve failed; carries the sample index and nu."""


def _solve_task(args) -> tuple[np.ndarray | None, np.ndarray | None, float, float]:
    idx, grid, physics, nu, rank_fine, rank_coarse = args
    try:
        _, _, ops = _get_context(grid, physics)
        psi0 = build_initial_condition(grid, physics.initial_condition(nu))
        phi_f = phi_c = None
        t_f = t_c = 0.0
        if rank_fine is not None:
            tic = time.perf_counter()
            if rank_fine == 0:  # rank 0 encodes the dense reference solver
                phi_f = scalar_flux(solve_full(ops, psi0, grid), grid.dx).phi
            else:
                phi_f = lowrank_qoi(solve_dlra(ops, psi0, rank_fine, grid), grid.dx).phi
            t_f = time.perf_counter() - tic
        if rank_coarse is not None:
            tic = time.perf_counter()
            phi_c = lowrank_qoi(solve_dlra(ops, psi0, rank_coarse, grid), grid.dx).phi
            t_c = time.perf_counter() - tic
        return phi_f, phi_c, t_f, t_c
    except Exception as exc:
        raise SampleFailedError(f"sample {idx} (nu={nu}) failed: {exc}") from exc


class SampleEngine:
    """Maps batches of nu realizations to QoI fields, optionally parallel.

    Results are gathered in sample order regardless of worker count, so
    all downstream statistics are reproducible bit for bit.
    """

    def __init__(self, grid: GridSpec, physics: Physics | None = None, workers: int = 1):
        self.grid = grid
        self.physics = physics if physics is not None else Physics()
        self.workers = max(1, int(workers))
        self._pool: ProcessPoolExecutor | None = None

    # -- lifecycle ---------------------------------------------------------
    def __enter__(self) -> "SampleEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _ensure_pool(self) -> ProcessPoolExecutor:
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers, initializer=_limit_worker_threads
            )
        return self._pool

    # -- batch solves --------------------------------------------------------
    def _run(self, tasks: list) -> list:
        if self.workers == 1 or len(tasks) <= 1:
            return [_solve_task(t) for t in tasks]
        pool = self._ensure_pool()
        chunk = max(1, len(tasks) // (4 * self.workers))
        return list(pool.map(_solve_task, tasks, chunksize=chunk))

    def map_qoi(
        self, nus: np.ndarray, rank: int | None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Solve one rank per nu; rank=None runs the dense solver.

        Returns (N x m QoI array, per-solve wall times).
        """
        code = 0 if rank is None else int(rank)
        tasks = [
            (i, self.grid, self.physics, float(nu), code, None)
            for i, nu in enumerate(nus)
        ]
        out = self._run(tasks)
        phis = np.array([o[0] for o in out])
        times = np.array([o[2] for o in out])
        return phis, times

    def map_pairs(
        self, nus: np.ndarray, rank_fine: int, rank_coarse: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Solve correlated (fine, coarse) pairs at shared nu values."""
        tasks = [
            (i, self.grid, self.physics, float(nu), int(rank_fine), int(rank_coarse))
            for i, nu in enumerate(nus)
        ]
        out = self._run(tasks)
        phis_f = np.array([o[0] for o in out])
        phis_c = np.array([o[1] for o in out])
        return phis_f, phis_c, np.array([o[2] for o in out]), np.array([o[3] for o in out])

    def draw_many(self, seed: int, start: int, count: int) -> np.ndarray:
        """Consecutive counter-based draws start .. start+count-1."""
        return np.array(
            [
                draw_parameter(
                    seed, i, self.physics.nu_low, self.physics.nu_high
                ).nu
                for i in range(start, start + count)
            ]
        )
