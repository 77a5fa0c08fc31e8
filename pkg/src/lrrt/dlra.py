"""Fixed-rank augmented BUG (basis-update & Galerkin) integrator.

Advances a rank-r factorization Y = X S V^T of the moment matrix through
the transport dynamics without ever forming the dense solution:

1. K/L steps: Euler updates of K = X S and L = V S^T under the dynamics
   projected onto the frozen opposite basis.
2. Basis augmentation: orthonormal bases of [K1, X0] and [L1, V0],
   doubling the available subspace.
3. Galerkin S-step: Euler update of the augmented coefficient matrix.
4. Truncation: SVD of the augmented coefficients, keeping the r largest
   singular values.

The right-hand side is always evaluated through orthogonal projections
of the transport operators (algebraically identical to applying the
dense right-hand side to the reconstructed matrix and projecting), so
the per-step cost scales with the rank rather than with the dense state
size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fullrank import QoIVector
from .transport import FullState, GridSpec, PnOperators

__all__ = [
    "LowRankState",
    "AugmentedBasis",
    "factorize",
    "kl_steps",
    "augment_bases",
    "s_step",
    "truncate_rank",
    "bug_step",
    "solve_dlra",
    "lowrank_qoi",
]


@dataclass
class LowRankState:
    """Factorization X S V^T with orthonormal X (m x r) and V (n x r).

    truncation_error records the singular-value mass discarded by the
    most recent rank truncation (diagnostic only, not consumed anywhere).
    """

    X: np.ndarray
    S: np.ndarray
    V: np.ndarray
    t: float = 0.0
    truncation_error: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        m, r = self.X.shape
        n, rv = self.V.shape
        if self.S.shape != (r, r) or rv != r:
            raise ValueError(
                f"inconsistent factor shapes X{self.X.shape} S{self.S.shape} "
                f"V{self.V.shape}"
            )
        if r > min(m, n):
            raise ValueError(f"rank {r} exceeds min(m, n) = {min(m, n)}")
        defect = self.orthonormality_defect()
        if defect > 1e-10:
            raise ValueError(f"factors are not orthonormal (defect {defect:.2e})")

    @property
    def rank(self) -> int:
        return self.X.shape[1]

    def dense(self) -> np.ndarray:
        """Reconstruct the full matrix (tests and diagnostics only)."""
        return self.X @ self.S @ self.V.T

    def orthonormality_defect(self) -> float:
        """Max Frobenius distance of X^T X and V^T V from identity."""
        r = self.rank
        ex = np.linalg.norm(self.X.T @ self.X - np.eye(r))
        ev = np.linalg.norm(self.V.T @ self.V - np.eye(r))
        return max(ex, ev)


@dataclass
class AugmentedBasis:
    """Doubled bases spanning [K1, X0] and [L1, V0] plus back-projections.

    M = X_hat^T X0 and N = V_hat^T V0 recover the old factors inside the
    augmented frames: X_hat M = X0 and V_hat N = V0.
    """

    X_hat: np.ndarray
    V_hat: np.ndarray
    M: np.ndarray
    N: np.ndarray


def factorize(psi: np.ndarray, r: int, t: float = 0.0) -> LowRankState:
    """Best rank-r factorization of a dense matrix via truncated SVD."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {psi.shape}")
    m, n = psi.shape
    if not 1 <= r <= min(m, n):
        raise ValueError(f"rank must satisfy 1 <= r <= {min(m, n)}, got {r}")
    U, sig, Vt = np.linalg.svd(psi, full_matrices=False)
    tail = float(np.sqrt(np.sum(sig[r:] ** 2)))
    return LowRankState(
        X=U[:, :r].copy(),
        S=np.diag(sig[:r]),
        V=Vt[:r].T.copy(),
        t=t,
        truncation_error=tail,
    )


def _k_rhs_coeffs(ops: PnOperators, V: np.ndarray):
    # projections of the moment-space operators onto span(V)
    C_plus = V.T @ (ops.A_plus @ V)
    C_minus = V.T @ (ops.A_minus @ V)
    G_hat = V.T @ (ops.g_diag[:, None] * V)
    return C_plus, C_minus, G_hat


def _k_rhs(ops: PnOperators, K: np.ndarray, coeffs) -> np.ndarray:
    C_plus, C_minus, G_hat = coeffs
    advection = (ops.D_minus @ K) @ C_plus + (ops.D_plus @ K) @ C_minus
    scattering = (ops.sigma_s_diag[:, None] * K) @ G_hat
    return scattering - advection


def _l_rhs_coeffs(ops: PnOperators, X: np.ndarray):
    # projections of the space operators onto span(X)
    U_minus = X.T @ (ops.D_minus.T @ X)
    U_plus = X.T @ (ops.D_plus.T @ X)
    W = X.T @ (ops.sigma_s_diag[:, None] * X)
    return U_minus, U_plus, W


def _l_rhs(ops: PnOperators, L: np.ndarray, coeffs) -> np.ndarray:
    U_minus, U_plus, W = coeffs
    advection = (ops.A_plus @ L) @ U_minus + (ops.A_minus @ L) @ U_plus
    scattering = ops.g_diag[:, None] * (L @ W)
    return scattering - advection


def kl_steps(
    ops: PnOperators, state: LowRankState, h: float
) -> tuple[np.ndarray, np.ndarray]:
    """Euler updates of K = X S and L = V S^T with frozen opposite bases.

    Both updates use the right-hand side evaluated at the same
    reconstructed Y0 = X0 S0 V0^T:
        K1 = X0 S0 + h F(Y0) V0
        L1 = V0 S0^T + h F(Y0)^T X0
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    K0 = state.X @ state.S
    L0 = state.V @ state.S.T
    K1 = K0 + h * _k_rhs(ops, K0, _k_rhs_coeffs(ops, state.V))
    L1 = L0 + h * _l_rhs(ops, L0, _l_rhs_coeffs(ops, state.X))
    return K1, L1


def augment_bases(
    K1: np.ndarray, L1: np.ndarray, state: LowRankState
) -> AugmentedBasis:
    """Orthonormal bases of [K1, X0] and [L1, V0].

    Householder QR keeps the output orthonormal even for rank-deficient
    stacks (the surplus columns are completed deterministically by the
    reflectors), so X_hat is always m x min(2r, m) and V_hat always
    n x min(2r, n).
    """
    m, r = state.X.shape
    n = state.V.shape[0]
    if K1.shape != (m, r) or L1.shape != (n, r):
        raise ValueError(
            f"K1 {K1.shape} / L1 {L1.shape} inconsistent with state "
            f"({m}x{r}, {n}x{r})"
        )
    X_hat, _ = np.linalg.qr(np.column_stack([K1, state.X]))
    V_hat, _ = np.linalg.qr(np.column_stack([L1, state.V]))
    M = X_hat.T @ state.X
    N = V_hat.T @ state.V
    return AugmentedBasis(X_hat=X_hat, V_hat=V_hat, M=M, N=N)


def s_step(
    ops: PnOperators, aug: AugmentedBasis, S0: np.ndarray, h: float
) -> np.ndarray:
    """Galerkin Euler step of the coefficients in the augmented bases.

    S_hat0 = M S0 N^T embeds the old solution; the update is
    S_hat1 = S_hat0 + h X_hat^T F(X_hat S_hat0 V_hat^T) V_hat.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    S_hat0 = aug.M @ S0 @ aug.N.T
    X_hat, V_hat = aug.X_hat, aug.V_hat
    P_minus = X_hat.T @ (ops.D_minus @ X_hat)
    P_plus = X_hat.T @ (ops.D_plus @ X_hat)
    P_sigma = X_hat.T @ (ops.sigma_s_diag[:, None] * X_hat)
    C_plus = V_hat.T @ (ops.A_plus @ V_hat)
    C_minus = V_hat.T @ (ops.A_minus @ V_hat)
    G_hat = V_hat.T @ (ops.g_diag[:, None] * V_hat)
    advection = P_minus @ S_hat0 @ C_plus + P_plus @ S_hat0 @ C_minus
    scattering = P_sigma @ S_hat0 @ G_hat
    return S_hat0 + h * (scattering - advection)


def truncate_rank(
    S_hat: np.ndarray, aug: AugmentedBasis, r: int, t: float = 0.0
) -> LowRankState:
    """Truncate the augmented solution back to rank r (Eckart-Young).

    SVD of the small coefficient matrix; the r largest singular values
    and the rotated bases give the best rank-r approximation of
    X_hat S_hat V_hat^T.
    """
    P, sig, Qt = np.linalg.svd(S_hat)
    if r > min(S_hat.shape):
        raise ValueError(
            f"target rank {r} exceeds augmented coefficient size {S_hat.shape}"
        )
    tail = float(np.sqrt(np.sum(sig[r:] ** 2)))
    return LowRankState(
        X=aug.X_hat @ P[:, :r],
        S=np.diag(sig[:r]),
        V=aug.V_hat @ Qt[:r].T,
        t=t,
        truncation_error=tail,
    )


def bug_step(ops: PnOperators, state: LowRankState, h: float) -> LowRankState:
    """One augmented BUG step: K/L -> augment -> Galerkin -> truncate."""
    K1, L1 = kl_steps(ops, state, h)
    aug = augment_bases(K1, L1, state)
    S_hat1 = s_step(ops, aug, state.S, h)
    return truncate_rank(S_hat1, aug, state.rank, t=state.t + h)


def solve_dlra(
    ops: PnOperators, psi0: FullState, r: int, grid: GridSpec
) -> LowRankState:
    """Factorize the initial state and march to grid.t_end."""
    state = factorize(psi0.psi, r, t=psi0.t)
    t0 = psi0.t
    consumed = 0.0
    for h in grid.step_sizes():
        state = bug_step(ops, state, h)
        consumed += h
        state.t = t0 + consumed
    return state


def lowrank_qoi(state: LowRankState, dx: float) -> QoIVector:
    """Scalar flux X S (first row of V)^T without forming the dense state."""
    phi = state.X @ (state.S @ state.V[0, :])
    return QoIVector(phi=phi, dx=dx)
