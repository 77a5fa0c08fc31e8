"""Discretization of the slab-geometry radiative transfer equation.

The kinetic density psi(t, x, mu) with x in [a, b] and direction cosine
mu in [-1, 1] satisfies

    d_t psi + mu d_x psi = sigma_s(x) * (1/2 * int psi dmu' - psi).

Expanding psi in normalized Legendre polynomials of mu (a P_{n-1} moment
method) turns this into a matrix ODE for the m x n moment-coefficient
matrix Psi,

    d_t Psi = F(Psi) = -(D_minus Psi A_plus + D_plus Psi A_minus)
              + Sigma_s Psi G,

where A is the symmetric tridiagonal flux matrix of the three-term
recurrence, A_plus/A_minus its positive/negative spectral parts used for
upwinding, D_minus/D_plus one-sided difference stencils with zero inflow
boundaries, Sigma_s the diagonal scattering-rate matrix and G the
moment-space scattering projector diag(0, -1, ..., -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridSpec",
    "Physics",
    "InitialCondition",
    "PnOperators",
    "FullState",
    "build_flux_matrix",
    "split_flux_matrix",
    "build_operators",
    "build_initial_condition",
    "apply_rhs",
]


@dataclass(frozen=True)
class GridSpec:
    """Space/angle/time discretization parameters.

    m spatial grid points on [a, b] with spacing dx = (b - a)/(m - 1),
    n angular moments (a P_{n-1} method), and explicit time steps
    dt = cfl * dx marching to t_end (the last step is shortened so the
    final time is hit exactly).
    """

    m: int
    n: int
    a: float = -1.5
    b: float = 1.5
    cfl: float = 1.0
    t_end: float = 1.0

    def __post_init__(self) -> None:
        if self.m < 3:
            raise ValueError(f"need at least 3 spatial points, got m={self.m}")
        if self.n < 1:
            raise ValueError(f"need at least 1 angular moment, got n={self.n}")
        if not self.b > self.a:
            raise ValueError(f"empty domain: a={self.a}, b={self.b}")
        if not self.cfl > 0:
            raise ValueError(f"cfl must be positive, got {self.cfl}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / (self.m - 1)

    @property
    def dt(self) -> float:
        return self.cfl * self.dx

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.m)

    def step_sizes(self) -> list[float]:
        """Step lengths that land exactly on t_end.

        All steps equal dt except possibly a shortened final one.
        """
        if self.t_end == 0.0:
            return []
        # tolerate t_end/dt being an integer up to rounding
        n_full = int(math.floor(self.t_end / self.dt * (1.0 + 1e-12)))
        remainder = self.t_end - n_full * self.dt
        steps = [self.dt] * n_full
        if remainder > 1e-12 * self.t_end:
            steps.append(remainder)
        elif steps:
            # absorb the rounding residue so the times telescope exactly
            steps[-1] = self.t_end - (n_full - 1) * self.dt
        return steps


@dataclass(frozen=True)
class Physics:
    """Problem data shared by every sample of a campaign.

    sigma and floor shape the cut-off Gaussian initial condition,
    sigma_s is the (constant) scattering rate, and [nu_low, nu_high]
    bounds the uniformly distributed random amplitude.
    """

    sigma: float = 0.1
    floor: float = 1e-4
    sigma_s: float = 1.0
    nu_low: float = 0.5
    nu_high: float = 1.5

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")
        if not self.nu_low < self.nu_high:
            raise ValueError(
                f"empty amplitude range [{self.nu_low}, {self.nu_high}]"
            )

    def initial_condition(self, nu: float) -> "InitialCondition":
        return InitialCondition(nu=nu, sigma=self.sigma, floor=self.floor)


@dataclass(frozen=True)
class InitialCondition:
    """Cut-off Gaussian initial profile with random amplitude nu."""

    nu: float
    sigma: float = 0.1
    floor: float = 1e-4

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"amplitude must be positive and finite, got {self.nu}")


@dataclass(frozen=True)
class PnOperators:
    """Assembled discrete operators of the moment system.

    D_minus/D_plus and Sigma_s are stored sparse (they are applied to
    m x n states every step); A and its spectral parts are dense n x n.
    """

    A: np.ndarray
    A_plus: np.ndarray
    A_minus: np.ndarray
    D_minus: sp.csr_array
    D_plus: sp.csr_array
    Sigma_s: sp.csr_array
    G: np.ndarray
    # diagonals kept for cheap elementwise application of Sigma_s and G
    sigma_s_diag: np.ndarray = field(repr=False, default=None)
    g_diag: np.ndarray = field(repr=False, default=None)

    @property
    def m(self) -> int:
        return self.D_minus.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass
class FullState:
    """Dense m x n moment-coefficient matrix at time t."""

    psi: np.ndarray
    t: float = 0.0


def build_flux_matrix(n: int) -> np.ndarray:
    """Flux matrix of the normalized-Legendre moment system.

    Entries A_ij = int mu P~_i(mu) P~_j(mu) dmu; the three-term
    recurrence makes A symmetric tridiagonal with zero diagonal and
    off-diagonal entries c_l = (l+1)/sqrt((2l+1)(2l+3)).  Its spectrum
    lies in [-1, 1], so unit-speed CFL reasoning applies.
    """
    if n < 1:
        raise ValueError(f"need at least 1 moment, got n={n}")
    A = np.zeros((n, n))
    for l in range(n - 1):
        c = (l + 1) / math.sqrt((2 * l + 1) * (2 * l + 3))
        A[l, l + 1] = c
        A[l + 1, l] = c
    return A


def split_flux_matrix(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral split A = A_plus + A_minus for upwinding.

    A_plus = Q max(M, 0) Q^T and A_minus = Q min(M, 0) Q^T from the
    eigendecomposition A = Q M Q^T, so A_plus is PSD and A_minus NSD.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"flux matrix must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("flux matrix must be symmetric")
    eigval, Q = np.linalg.eigh(A)
    A_plus = (Q * np.maximum(eigval, 0.0)) @ Q.T
    A_minus = (Q * np.minimum(eigval, 0.0)) @ Q.T
    return A_plus, A_minus


def _difference_stencils(grid: GridSpec) -> tuple[sp.csr_array, sp.csr_array]:
    # backward difference with zero inflow from the left: first row keeps
    # only the +1/dx diagonal entry; forward difference mirrored on the right
    m, dx = grid.m, grid.dx
    ones = np.ones(m)
    D_minus = sp.diags_array(
        [ones / dx, -ones[:-1] / dx], offsets=[0, -1], format="csr"
    )
    D_plus = sp.diags_array(
        [-ones / dx, ones[:-1] / dx], offsets=[0, 1], format="csr"
    )
    return D_minus, D_plus


def build_operators(grid: GridSpec, sigma_s=1.0) -> PnOperators:
    """Assemble all discrete operators for a grid.

    sigma_s may be a constant rate or a callable x -> rate evaluated at
    the grid points.
    """
    A = build_flux_matrix(grid.n)
    A_plus, A_minus = split_flux_matrix(A)
    D_minus, D_plus = _difference_stencils(grid)

    if callable(sigma_s):
        rates = np.asarray(sigma_s(grid.x), dtype=float)
        rates = np.broadcast_to(rates, (grid.m,)).copy()
    else:
        rates = np.full(grid.m, float(sigma_s))
    if not np.all(np.isfinite(rates)):
        raise ValueError("scattering rates must be finite")
    Sigma_s = sp.diags_array([rates], offsets=[0], format="csr")

    g = np.full(grid.n, -1.0)
    g[0] = 0.0
    G = np.diag(g)

    return PnOperators(
        A=A,
        A_plus=A_plus,
        A_minus=A_minus,
        D_minus=D_minus,
        D_plus=D_plus,
        Sigma_s=Sigma_s,
        G=G,
        sigma_s_diag=rates,
        g_diag=g,
    )


def build_initial_condition(grid: GridSpec, ic: InitialCondition) -> FullState:
    """Isotropic cut-off Gaussian start: rank-1 moment matrix at t = 0.

    w(x) = max(floor, nu/(sqrt(2 pi) sigma) * exp(-x^2/(2 sigma^2))); the
    zeroth normalized-Legendre coefficient of an isotropic density w is
    sqrt(2) * w, all higher moments vanish.
    """
    x = grid.x
    w = np.maximum(
        ic.floor,
        ic.nu / (math.sqrt(2.0 * math.pi) * ic.sigma)
        * np.exp(-(x**2) / (2.0 * ic.sigma**2)),
    )
    psi = np.zeros((grid.m, grid.n))
    psi[:, 0] = math.sqrt(2.0) * w
    return FullState(psi=psi, t=0.0)


def apply_rhs(ops: PnOperators, psi: np.ndarray) -> np.ndarray:
    """Evaluate F(Psi) = -(D- Psi A+ + D+ Psi A-) + Sigma_s Psi G."""
    psi = np.asarray(psi)
    if psi.ndim != 2 or psi.shape != (ops.m, ops.n):
        raise ValueError(
            f"state shape {psi.shape} does not match operators ({ops.m}, {ops.n})"
        )
    advection = ops.D_minus @ (psi @ ops.A_plus) + ops.D_plus @ (psi @ ops.A_minus)
    scattering = (ops.sigma_s_diag[:, None] * psi) * ops.g_diag[None, :]
    return scattering - advection
