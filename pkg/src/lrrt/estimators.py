"""Monte Carlo and control-variate estimators of the expected scalar flux.

All scalar statistics (variances, covariances, MC errors, biases) use
the dx-weighted discrete L2 inner product <u, v> = sum_i u_i v_i dx, so
values are comparable across grid resolutions.  The control-variate
estimator combines a coarse-rank mean term with a correlated
fine-minus-coarse difference term,

    Q_cv = alpha * mean(G_s over coarse-only samples)
           + mean(G_r - alpha * G_s over correlated pairs),

with the variance-minimizing weight alpha* = Cov_rs / Var_s and the
difference-sample allocation N_diff = ceil(Var_r (1 - Corr^2) / eps^2).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .fullrank import QoIVector
from .sampling import SampleEngine, draw_parameter, stream_seed
from .transport import GridSpec, Physics

__all__ = [
    "DegenerateCoarseError",
    "SampleBudgetError",
    "SampleStatistics",
    "EstimatorReport",
    "weighted_l2",
    "sample_statistics",
    "mc_estimate",
    "optimal_alpha",
    "diff_sample_count",
    "cv_estimate",
    "cv_pipeline",
]


class DegenerateCoarseError(ValueError):
    """The coarse fidelity carries no variance; alpha* is undefined."""


class SampleBudgetError(RuntimeError):
    """The requested difference-sample count exceeds the configured cap."""


class SampleStatistics(NamedTuple):
    """Scalar pair statistics under the dx-weighted inner product."""

    var_fine: float
    var_coarse: float
    cov: float
    corr: float


@dataclass
class EstimatorReport:
    """Outcome of one estimator run plus its decision diagnostics."""

    mean: QoIVector
    variance_field: np.ndarray
    mc_error: float
    n_samples: int
    wall_time: float
    bias: float | None = None
    alpha: float | None = None
    n_diff: int | None = None
    n_coarse: int | None = None
    var_fine: float | None = None
    var_coarse: float | None = None
    corr: float | None = None
    epsilon: float | None = None
    rank: int | None = None
    rank_coarse: int | None = None
    master_seed: int | None = None

    def __post_init__(self) -> None:
        if self.mc_error < 0:
            raise ValueError(f"mc_error must be nonnegative, got {self.mc_error}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")


def weighted_l2(u: np.ndarray, dx: float) -> float:
    """Discrete dx-weighted L2 norm sqrt(sum u_i^2 dx)."""
    return float(np.sqrt(np.sum(np.asarray(u) ** 2) * dx))


def _stack(qois: list[QoIVector]) -> tuple[np.ndarray, float]:
    if len(qois) == 0:
        raise ValueError("need at least one QoI vector")
    dx = qois[0].dx
    length = len(qois[0].phi)
    for q in qois:
        if q.dx != dx or len(q.phi) != length:
            raise ValueError("QoI vectors live on different grids")
    return np.stack([q.phi for q in qois]), dx


def _paired_scalar_stats(
    fine: np.ndarray, coarse: np.ndarray, dx: float
) -> SampleStatistics:
    n = fine.shape[0]
    dev_f = fine - fine.mean(axis=0)
    dev_c = coarse - coarse.mean(axis=0)
    var_f = float(np.sum(dev_f * dev_f) * dx / (n - 1))
    var_c = float(np.sum(dev_c * dev_c) * dx / (n - 1))
    cov = float(np.sum(dev_f * dev_c) * dx / (n - 1))
    if var_f > 0 and var_c > 0:
        corr = cov / math.sqrt(var_f * var_c)
        corr = min(1.0, max(-1.0, corr))
    else:
        corr = 0.0
    return SampleStatistics(var_fine=var_f, var_coarse=var_c, cov=cov, corr=corr)


def sample_statistics(
    fine: list[QoIVector], coarse: list[QoIVector]
) -> SampleStatistics:
    """Unbiased Var/Cov/Corr of correlated (fine, coarse) QoI pairs."""
    if len(fine) != len(coarse):
        raise ValueError(
            f"pair lists differ in length: {len(fine)} vs {len(coarse)}"
        )
    if len(fine) < 2:
        raise ValueError("need at least 2 pairs for unbiased statistics")
    F, dx_f = _stack(fine)
    C, dx_c = _stack(coarse)
    if dx_f != dx_c or F.shape != C.shape:
        raise ValueError("fine and coarse QoIs live on different grids")
    return _paired_scalar_stats(F, C, dx_f)


def _variance_field(samples: np.ndarray) -> np.ndarray:
    if samples.shape[0] < 2:
        return np.zeros(samples.shape[1])
    dev = samples - samples.mean(axis=0)
    return np.sum(dev * dev, axis=0) / (samples.shape[0] - 1)


def _hook_samples(
    fn: Callable[[float], np.ndarray], nus: np.ndarray
) -> np.ndarray:
    return np.array([np.atleast_1d(np.asarray(fn(float(nu)), dtype=float)) for nu in nus])


def mc_estimate(
    r: int | None,
    grid: GridSpec | None,
    N: int,
    master_seed: int,
    *,
    physics: Physics | None = None,
    workers: int = 1,
    qoi_fn: Callable[[float], np.ndarray] | None = None,
    engine: SampleEngine | None = None,
) -> EstimatorReport:
    """Plain Monte Carlo estimate of E[phi] from N rank-r solves.

    qoi_fn replaces the PDE solve with an analytic model nu -> QoI (test
    hook); in that case the field is weighted with dx = 1.  Without a
    hook, r = None runs the dense full-rank solver.
    """
    if N < 2:
        raise ValueError(f"need at least 2 samples, got N={N}")
    physics = physics if physics is not None else Physics()
    tic = time.perf_counter()
    if qoi_fn is not None:
        nus = np.array(
            [
                draw_parameter(master_seed, i, physics.nu_low, physics.nu_high).nu
                for i in range(N)
            ]
        )
        phis = _hook_samples(qoi_fn, nus)
        dx = 1.0
    else:
        if grid is None:
            raise ValueError("a grid is required without a QoI hook")
        own_engine = engine is None
        eng = engine or SampleEngine(grid, physics, workers)
        try:
            nus = eng.draw_many(master_seed, 0, N)
            phis, _ = eng.map_qoi(nus, r)
        finally:
            if own_engine:
                eng.close()
        dx = grid.dx
    var_field = _variance_field(phis)
    var_scalar = float(var_field.sum() * dx)
    return EstimatorReport(
        mean=QoIVector(phi=phis.mean(axis=0), dx=dx),
        variance_field=var_field,
        mc_error=math.sqrt(var_scalar / N),
        n_samples=N,
        wall_time=time.perf_counter() - tic,
        var_fine=var_scalar,
        rank=r,
        master_seed=master_seed,
    )


def optimal_alpha(cov: float, var_coarse: float) -> float:
    """Variance-minimizing control-variate weight alpha* = Cov / Var_s."""
    if not var_coarse > 0:
        raise DegenerateCoarseError(
            f"coarse variance must be positive, got {var_coarse}"
        )
    return cov / var_coarse


def diff_sample_count(var_fine: float, corr: float, epsilon: float) -> int:
    """Difference samples needed to hit the target error epsilon.

    N_diff = ceil(Var_r (1 - Corr^2) / eps^2), at least 1.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if var_fine < 0:
        raise ValueError(f"variance must be nonnegative, got {var_fine}")
    if abs(corr) > 1:
        raise ValueError(f"correlation must lie in [-1, 1], got {corr}")
    n = math.ceil(var_fine * (1.0 - corr * corr) / (epsilon * epsilon))
    return max(1, n)


def _combine_cv(
    alpha: float,
    coarse_all: np.ndarray,
    diff_fine: np.ndarray,
    diff_coarse: np.ndarray,
    dx: float,
    coarse_mean_exact: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Combine the two control-variate terms; returns (mean, diff var field, mc_error)."""
    if coarse_mean_exact is not None:
        coarse_mean = coarse_mean_exact
        coarse_term_var = 0.0
        n_coarse = 0
    else:
        coarse_mean = coarse_all.mean(axis=0)
        n_coarse = coarse_all.shape[0]
        coarse_term_var = float(_variance_field(coarse_all).sum() * dx)
    n_diff = diff_fine.shape[0]
    if n_diff > 0:
        diffs = diff_fine - alpha * diff_coarse
        diff_mean = diffs.mean(axis=0)
        diff_var_field = _variance_field(diffs)
    else:
        diff_mean = np.zeros_like(coarse_mean)
        diff_var_field = np.zeros_like(coarse_mean)
    estimate = alpha * coarse_mean + diff_mean
    err_sq = 0.0
    if n_diff > 0:
        err_sq += float(diff_var_field.sum() * dx) / n_diff
    if n_coarse > 0:
        err_sq += alpha * alpha * coarse_term_var / n_coarse
    return estimate, diff_var_field, math.sqrt(err_sq)


def cv_estimate(
    r: int | None,
    s: int | None,
    n_coarse: int,
    n_diff: int,
    alpha: float,
    grid: GridSpec | None,
    master_seed: int,
    *,
    physics: Physics | None = None,
    workers: int = 1,
    engine: SampleEngine | None = None,
    fine_fn: Callable[[float], np.ndarray] | None = None,
    coarse_fn: Callable[[float], np.ndarray] | None = None,
    coarse_mean: np.ndarray | None = None,
) -> EstimatorReport:
    """Control-variate estimate from independent coarse and paired streams.

    The coarse-only samples and the correlated difference pairs consume
    disjoint sub-streams of the master seed, so the two terms of the
    estimator are independent.  fine_fn/coarse_fn are analytic test
    hooks replacing the PDE solves; coarse_mean supplies E[G_s] exactly
    (skipping the coarse-only phase).  Wall time covers both phases.
    """
    if (fine_fn is None) != (coarse_fn is None):
        raise ValueError("provide both fine_fn and coarse_fn or neither")
    hooked = fine_fn is not None
    if not hooked:
        if r is None or s is None or grid is None:
            raise ValueError("ranks and grid are required without QoI hooks")
        if s >= r:
            raise ValueError(f"coarse rank must satisfy s < r, got s={s}, r={r}")
    if coarse_mean is None and n_coarse < 2:
        raise ValueError(f"need at least 2 coarse samples, got {n_coarse}")
    if n_diff < 0:
        raise ValueError(f"difference count must be nonnegative, got {n_diff}")
    physics = physics if physics is not None else Physics()

    tic = time.perf_counter()
    pair_seed = stream_seed(master_seed, "cv-pairs")
    coarse_seed = stream_seed(master_seed, "cv-coarse")
    low, high = physics.nu_low, physics.nu_high
    own_engine = engine is None and not hooked
    eng = engine if engine is not None else (
        SampleEngine(grid, physics, workers) if not hooked else None
    )
    try:
        pair_nus = np.array(
            [draw_parameter(pair_seed, i, low, high).nu for i in range(n_diff)]
        )
        if hooked:
            diff_fine = _hook_samples(fine_fn, pair_nus)
            diff_coarse = _hook_samples(coarse_fn, pair_nus)
            dx = 1.0
        else:
            diff_fine, diff_coarse, _, _ = eng.map_pairs(pair_nus, r, s)
            dx = grid.dx
        if coarse_mean is not None:
            coarse_all = np.zeros((0, diff_fine.shape[1] if n_diff else 1))
        else:
            coarse_nus = np.array(
                [draw_parameter(coarse_seed, i, low, high).nu for i in range(n_coarse)]
            )
            if hooked:
                coarse_all = _hook_samples(coarse_fn, coarse_nus)
            else:
                coarse_all, _ = eng.map_qoi(coarse_nus, s)
    finally:
        if own_engine and eng is not None:
            eng.close()

    estimate, diff_var_field, mc_error = _combine_cv(
        alpha, coarse_all, diff_fine, diff_coarse, dx, coarse_mean
    )
    stats = (
        _paired_scalar_stats(diff_fine, diff_coarse, dx) if n_diff >= 2 else None
    )
    return EstimatorReport(
        mean=QoIVector(phi=estimate, dx=dx),
        variance_field=diff_var_field,
        mc_error=mc_error,
        n_samples=max(1, n_coarse if coarse_mean is None else n_diff),
        wall_time=time.perf_counter() - tic,
        alpha=alpha,
        n_diff=n_diff,
        n_coarse=n_coarse if coarse_mean is None else 0,
        var_fine=stats.var_fine if stats else None,
        var_coarse=stats.var_coarse if stats else None,
        corr=stats.corr if stats else None,
        rank=r,
        rank_coarse=s,
        master_seed=master_seed,
    )


def cv_pipeline(
    mode: str,
    r: int | None,
    s: int | None,
    n_mc: int,
    grid: GridSpec | None,
    master_seed: int,
    pilot_N: int = 500,
    warmup_N: int = 200,
    *,
    epsilon: float | None = None,
    physics: Physics | None = None,
    workers: int = 1,
    engine: SampleEngine | None = None,
    n_diff_cap: int = 100_000,
    fine_fn: Callable[[float], np.ndarray] | None = None,
    coarse_fn: Callable[[float], np.ndarray] | None = None,
) -> EstimatorReport:
    """End-to-end control variate run with estimated alpha*.

    pilot mode: alpha*, Corr and Var_r come from pilot_N pairs on a
    dedicated stream; the target error defaults to the measured MC error
    of a fresh n_mc-sample fine run (pass epsilon to reuse a stored one);
    the estimator itself then runs with N_coarse = n_mc.  The reported
    wall time covers only the estimator phase (the pilot is treated as
    precomputed).

    warm-up mode: warmup_N pairs double as the start of the difference
    stream; alpha*, Corr, Var_r, the target error sqrt(Var_r/n_mc) and
    N_diff all come from them.  If N_diff <= warmup_N the pairs are
    reused outright and n_mc - warmup_N coarse-only samples complete the
    coarse mean; otherwise N_diff - warmup_N extra pairs are appended to
    the same stream and n_mc - (N_diff - warmup_N) coarse-only samples
    are run.  Wall time covers everything, including the coarse-only
    solves.
    """
    if mode not in ("pilot", "warmup"):
        raise ValueError(f"mode must be 'pilot' or 'warmup', got {mode!r}")
    if (fine_fn is None) != (coarse_fn is None):
        raise ValueError("provide both fine_fn and coarse_fn or neither")
    hooked = fine_fn is not None
    if not hooked:
        if r is None or s is None or grid is None:
            raise ValueError("ranks and grid are required without QoI hooks")
        if s >= r:
            raise ValueError(f"coarse rank must satisfy s < r, got s={s}, r={r}")
    physics = physics if physics is not None else Physics()
    low, high = physics.nu_low, physics.nu_high
    own_engine = engine is None and not hooked
    eng = engine if engine is not None else (
        SampleEngine(grid, physics, workers) if not hooked else None
    )

    def pairs_at(seed: int, start: int, count: int):
        nus = np.array(
            [draw_parameter(seed, i, low, high).nu for i in range(start, start + count)]
        )
        if hooked:
            return _hook_samples(fine_fn, nus), _hook_samples(coarse_fn, nus)
        f, c, _, _ = eng.map_pairs(nus, r, s)
        return f, c

    try:
        if mode == "pilot":
            pilot_seed = stream_seed(master_seed, "pilot")
            pf, pc = pairs_at(pilot_seed, 0, pilot_N)
            dx = 1.0 if hooked else grid.dx
            stats = _paired_scalar_stats(pf, pc, dx)
            alpha = optimal_alpha(stats.cov, stats.var_coarse)
            if epsilon is None:
                epsilon = mc_estimate(
                    r,
                    grid,
                    n_mc,
                    master_seed,
                    physics=physics,
                    workers=workers,
                    qoi_fn=fine_fn,
                    engine=eng,
                ).mc_error
            n_diff = diff_sample_count(stats.var_fine, stats.corr, epsilon)
            if n_diff > n_diff_cap:
                raise SampleBudgetError(
                    f"N_diff={n_diff} exceeds cap {n_diff_cap} "
                    f"(Var_r={stats.var_fine:.3e}, Corr={stats.corr:.6f}, "
                    f"eps={epsilon:.3e})"
                )
            report = cv_estimate(
                r,
                s,
                n_mc,
                n_diff,
                alpha,
                grid,
                master_seed,
                physics=physics,
                workers=workers,
                engine=eng,
                fine_fn=fine_fn,
                coarse_fn=coarse_fn,
            )
            # decision statistics come from the pilot set, not the few pairs
            report.var_fine = stats.var_fine
            report.var_coarse = stats.var_coarse
            report.corr = stats.corr
            report.epsilon = epsilon
            report.n_samples = n_mc
            return report

        # warm-up mode
        tic = time.perf_counter()
        pair_seed = stream_seed(master_seed, "cv-pairs")
        coarse_seed = stream_seed(master_seed, "cv-coarse")
        wf, wc = pairs_at(pair_seed, 0, warmup_N)
        dx = 1.0 if hooked else grid.dx
        stats = _paired_scalar_stats(wf, wc, dx)
        alpha = optimal_alpha(stats.cov, stats.var_coarse)
        if epsilon is None:
            epsilon = math.sqrt(stats.var_fine / n_mc)
        n_diff = diff_sample_count(stats.var_fine, stats.corr, epsilon)
        if n_diff > n_diff_cap:
            raise SampleBudgetError(
                f"N_diff={n_diff} exceeds cap {n_diff_cap} "
                f"(Var_r={stats.var_fine:.3e}, Corr={stats.corr:.6f}, "
                f"eps={epsilon:.3e})"
            )
        if n_diff <= warmup_N:
            diff_fine, diff_coarse = wf, wc
            n_coarse_only = max(0, n_mc - warmup_N)
        else:
            xf, xc = pairs_at(pair_seed, warmup_N, n_diff - warmup_N)
            diff_fine = np.concatenate([wf, xf])
            diff_coarse = np.concatenate([wc, xc])
            n_coarse_only = max(0, n_mc - (n_diff - warmup_N))
        coarse_nus = np.array(
            [draw_parameter(coarse_seed, i, low, high).nu for i in range(n_coarse_only)]
        )
        if n_coarse_only > 0:
            if hooked:
                coarse_only = _hook_samples(coarse_fn, coarse_nus)
            else:
                coarse_only, _ = eng.map_qoi(coarse_nus, s)
            coarse_all = np.concatenate([diff_coarse, coarse_only])
        else:
            coarse_all = diff_coarse
        estimate, diff_var_field, mc_error = _combine_cv(
            alpha, coarse_all, diff_fine, diff_coarse, dx
        )
        return EstimatorReport(
            mean=QoIVector(phi=estimate, dx=dx),
            variance_field=diff_var_field,
            mc_error=mc_error,
            n_samples=n_mc,
            wall_time=time.perf_counter() - tic,
            alpha=alpha,
            n_diff=diff_fine.shape[0],
            n_coarse=n_coarse_only,
            var_fine=stats.var_fine,
            var_coarse=stats.var_coarse,
            corr=stats.corr,
            epsilon=epsilon,
            rank=r,
            rank_coarse=s,
            master_seed=master_seed,
        )
    finally:
        if own_engine and eng is not None:
            eng.close()
