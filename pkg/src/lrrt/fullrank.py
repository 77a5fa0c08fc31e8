"""Dense reference solver: explicit Euler on the full moment matrix.

Serves as the ground truth that the low-rank integrator is measured
against; first order in time by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import FullState, GridSpec, PnOperators, apply_rhs

__all__ = ["QoIVector", "SolverDivergedError", "euler_step", "solve_full", "scalar_flux"]


class SolverDivergedError(RuntimeError):
    """Raised when a time step produces non-finite values."""


@dataclass(frozen=True)
class QoIVector:
    """Scalar-flux field phi(x) tagged with its grid spacing.

    The spacing travels with the field so that dx-weighted statistics
    and norms stay grid-consistent across resolutions.
    """

    phi: np.ndarray
    dx: float


def euler_step(ops: PnOperators, state: FullState, h: float) -> FullState:
    """One explicit Euler step: psi <- psi + h F(psi), t <- t + h."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    psi = state.psi + h * apply_rhs(ops, state.psi)
    if not np.all(np.isfinite(psi)):
        raise SolverDivergedError(
            f"non-finite state after step from t={state.t} with h={h}"
        )
    return FullState(psi=psi, t=state.t + h)


def solve_full(ops: PnOperators, psi0: FullState, grid: GridSpec) -> FullState:
    """March psi0 to grid.t_end with steps of grid.dt (last one shortened)."""
    state = psi0
    t0 = psi0.t
    consumed = 0.0
    for h in grid.step_sizes():
        state = euler_step(ops, state, h)
        consumed += h
        # keep t as an exact running offset, immune to step roundoff
        state = FullState(psi=state.psi, t=t0 + consumed)
    return state


def scalar_flux(state: FullState, dx: float) -> QoIVector:
    """Scalar flux phi = (1/sqrt(2)) int psi dmu.

    In the normalized-Legendre basis this is exactly the zeroth moment
    column of psi.
    """
    return QoIVector(phi=state.psi[:, 0].copy(), dx=dx)
