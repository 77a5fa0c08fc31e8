"""Low-rank radiative transfer with Monte Carlo uncertainty propagation.

Layers, bottom up:

- transport: slab-geometry moment discretization (grid, operators, RHS)
- fullrank: dense explicit Euler reference solver and the scalar-flux QoI
- dlra: rank-adaptive-basis low-rank integrator (K/L steps, basis
  augmentation, Galerkin S step, rank truncation)
- sampling: reproducible counter-based parameter draws and the worker pool
- estimators: Monte Carlo and control-variate estimators of E[phi]
- harness: study sweeps, reference persistence, CSV results
- cli: `lrrt` command-line entry point
"""

from .dlra import (
    AugmentedBasis,
    LowRankState,
    augment_bases,
    bug_step,
    factorize,
    kl_steps,
    lowrank_qoi,
    s_step,
    solve_dlra,
    truncate_rank,
)
from .estimators import (
    DegenerateCoarseError,
    EstimatorReport,
    SampleBudgetError,
    SampleStatistics,
    cv_estimate,
    cv_pipeline,
    diff_sample_count,
    mc_estimate,
    optimal_alpha,
    sample_statistics,
    weighted_l2,
)
from .fullrank import (
    QoIVector,
    SolverDivergedError,
    euler_step,
    scalar_flux,
    solve_full,
)
from .harness import (
    RESULT_COLUMNS,
    ExperimentConfig,
    ReferenceSolution,
    ResultRow,
    compute_metrics,
    compute_reference,
    default_reference_config,
    load_config,
    load_reference,
    read_results,
    run_study,
    save_reference,
    write_results,
)
from .sampling import (
    SampleEngine,
    SampleFailedError,
    SampleRecord,
    UncertainParameter,
    draw_parameter,
    stream_seed,
)
from .transport import (
    FullState,
    GridSpec,
    InitialCondition,
    Physics,
    PnOperators,
    apply_rhs,
    build_flux_matrix,
    build_initial_condition,
    build_operators,
    split_flux_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "RESULT_COLUMNS",
    "AugmentedBasis",
    "DegenerateCoarseError",
    "EstimatorReport",
    "ExperimentConfig",
    "FullState",
    "GridSpec",
    "InitialCondition",
    "LowRankState",
    "Physics",
    "PnOperators",
    "QoIVector",
    "ReferenceSolution",
    "ResultRow",
    "SampleBudgetError",
    "SampleEngine",
    "SampleFailedError",
    "SampleRecord",
    "SampleStatistics",
    "SolverDivergedError",
    "UncertainParameter",
    "apply_rhs",
    "augment_bases",
    "bug_step",
    "build_flux_matrix",
    "build_initial_condition",
    "build_operators",
    "compute_metrics",
    "compute_reference",
    "cv_estimate",
    "cv_pipeline",
    "default_reference_config",
    "diff_sample_count",
    "draw_parameter",
    "euler_step",
    "factorize",
    "kl_steps",
    "load_config",
    "load_reference",
    "lowrank_qoi",
    "mc_estimate",
    "optimal_alpha",
    "read_results",
    "run_study",
    "s_step",
    "sample_statistics",
    "save_reference",
    "scalar_flux",
    "solve_dlra",
    "solve_full",
    "split_flux_matrix",
    "stream_seed",
    "truncate_rank",
    "weighted_l2",
    "write_results",
]
