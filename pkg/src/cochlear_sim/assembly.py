"""Assembly of the jointly discretized system matrices.

The fixed-step recursion X_{j+1} = H X_j + K X_{j-1} + M U_j is built from
the finite-difference pressure matrix F, the BM selection matrix S2, the
block-diagonal micro-mechanics matrices A1, A0, Am1 and the fluid-coupling
matrix Gamma = S2^T F^{-1} S2 / dt^2.

F is tridiagonal and is solved in banded form; Gamma, H, K, M are dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import SingularMatrix
from .params import ElementCoefficients, PhysicalConstants

__all__ = [
    "DiscreteCoefficients",
    "SystemMatrices",
    "discrete_coefficients",
    "build_F",
    "build_S2",
    "build_block_matrices",
    "build_stepping",
    "assemble",
    "dump_matrix_csv",
]

# Reciprocal condition estimates below this are treated as singular.
RCOND_LIMIT = 1e-14


@dataclass(frozen=True)
class DiscreteCoefficients:
    """Per-element coefficients of the two discretized force equations.

    All arrays have length N; units are pressure per displacement
    (N m^-3) after multiplication by the appropriate displacement.
    """

    alpha1: np.ndarray
    alpha0: np.ndarray
    alpha_m1: np.ndarray
    beta1: np.ndarray
    beta0: np.ndarray
    eps1: np.ndarray
    eps0: np.ndarray
    delta1: np.ndarray
    delta0: np.ndarray
    delta_m1: np.ndarray


@dataclass(frozen=True)
class SystemMatrices:
    """Assembled matrices of one model instance (immutable after build)."""

    F: np.ndarray        # N x N finite-difference matrix
    S2: np.ndarray       # N x 2N BM selection matrix
    Gamma: np.ndarray    # 2N x 2N fluid coupling
    A1: np.ndarray       # 2N x 2N
    A0: np.ndarray       # 2N x 2N
    Am1: np.ndarray      # 2N x 2N (diagonal)
    H: np.ndarray        # 2N x 2N stepping matrix
    K: np.ndarray        # 2N x 2N stepping matrix
    M: np.ndarray        # 2N x N input matrix
    Finv: np.ndarray     # dense inverse of F (N x N)
    G: np.ndarray        # Finv / dt^2 (BM-restricted Gamma)
    dt: float
    dl: float

    @property
    def n_elements(self) -> int:
        return self.F.shape[0]

    @property
    def w_input(self) -> np.ndarray:
        """F^{-1} e_1: spatial input distribution for a basal excitation."""
        return self.Finv[:, 0]


def discrete_coefficients(
    coeffs: ElementCoefficients,
    constants: PhysicalConstants,
    dt: float,
    gamma=None,
) -> DiscreteCoefficients:
    """Evaluate the joint-discretization coefficients per element.

    ``gamma`` may be a scalar or a length-N array (the nonlinear solver
    rescales it per element and per step); defaults to the configured
    feedback gain.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if gamma is None:
        gamma = constants.gamma
    gamma = np.asarray(gamma, dtype=float)
    g = constants.g
    m1, m2 = constants.m1, constants.m2
    c1, c2, c3, c4 = coeffs.c1, coeffs.c2, coeffs.c3, coeffs.c4
    k1, k2, k3, k4 = coeffs.k1, coeffs.k2, coeffs.k3, coeffs.k4
    ones = np.ones_like(coeffs.x)

    bm_damp = (c1 + g * c3 - gamma * g * c4) / dt
    fb_damp = (gamma * c4 - c3) / dt
    tm_damp = (c2 + c3) / dt

    return DiscreteCoefficients(
        alpha1=m1 / dt**2 + bm_damp,
        alpha0=-2.0 * m1 / dt**2 - bm_damp + (k1 + g * k3 - gamma * g * k4),
        alpha_m1=m1 / dt**2 * ones,
        beta1=fb_damp * ones,
        beta0=-fb_damp + (gamma * k4 - k3),
        eps1=g * c3 / dt * ones,
        eps0=(-g * c3 / dt + g * k3) * ones,
        delta1=(-m2 / dt**2 - tm_damp) * ones,
        delta0=(2.0 * m2 / dt**2 + tm_damp - (k2 + k3)) * ones,
        delta_m1=-m2 / dt**2 * ones,
    )


def build_F(constants: PhysicalConstants, dl: float | None = None) -> np.ndarray:
    """N x N finite-difference matrix with both boundary rows."""
    N = constants.N
    if N < 3:
        raise ValueError("N must be >= 3")
    if dl is None:
        dl = constants.dl
    H, rho = constants.H, constants.rho
    s = H / (2.0 * rho * dl**2)
    F = np.zeros((N, N))
    F[0, 0] = -s * dl / H
    F[0, 1] = s * dl / H
    for off, val in ((-1, 1.0), (0, -2.0), (1, 1.0)):
        idx = np.arange(1, N - 1)
        F[idx, idx + off] = s * val
    F[N - 1, :] = 0.0
    F[N - 1, N - 1] = -1.0
    return F


def _banded_from_tridiag(F: np.ndarray) -> np.ndarray:
    """Pack a tridiagonal matrix into solve_banded's (1, 1) layout."""
    N = F.shape[0]
    ab = np.zeros((3, N))
    ab[0, 1:] = np.diag(F, 1)
    ab[1, :] = np.diag(F)
    ab[2, :-1] = np.diag(F, -1)
    return ab


def invert_F(F: np.ndarray) -> np.ndarray:
    """Dense inverse of the tridiagonal F via banded solves.

    Raises SingularMatrix when the banded factorization fails or the
    condition estimate is beyond double-precision trust.
    """
    N = F.shape[0]
    ab = _banded_from_tridiag(F)
    try:
        Finv = sla.solve_banded((1, 1), ab, np.eye(N))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"F is singular: {exc}") from exc
    # Cheap a-posteriori condition check on the residual.
    resid = np.abs(F @ Finv - np.eye(N)).max()
    if not np.isfinite(resid) or resid > 1e-6:
        raise SingularMatrix(f"F inverse residual too large: {resid:.3e}")
    return Finv


def build_S2(N: int) -> np.ndarray:
    """N x 2N selector picking the BM entries of the interleaved state."""
    S2 = np.zeros((N, 2 * N))
    S2[np.arange(N), 2 * np.arange(N)] = 1.0
    return S2


def build_block_matrices(dc: DiscreteCoefficients):
    """Block-diagonal micro-mechanics matrices (A1, A0, Am1), each 2N x 2N."""
    N = dc.alpha1.shape[0]
    A1 = np.zeros((2 * N, 2 * N))
    A0 = np.zeros((2 * N, 2 * N))
    Am1 = np.zeros((2 * N, 2 * N))
    bm = 2 * np.arange(N)
    tm = bm + 1
    A1[bm, bm] = dc.alpha1
    A1[bm, tm] = dc.beta1
    A1[tm, bm] = dc.eps1
    A1[tm, tm] = dc.delta1
    A0[bm, bm] = dc.alpha0
    A0[bm, tm] = dc.beta0
    A0[tm, bm] = dc.eps0
    A0[tm, tm] = dc.delta0
    Am1[bm, bm] = dc.alpha_m1
    Am1[tm, tm] = dc.delta_m1
    return A1, A0, Am1


def _lu_with_rcond(A: np.ndarray, name: str):
    """LU-factor A and verify its reciprocal condition estimate."""
    anorm = np.abs(A).sum(axis=1).max()
    lu, piv, info = lapack.dgetrf(A)
    if info != 0:
        raise SingularMatrix(f"{name} is exactly singular (dgetrf info={info})")
    rcond, info = lapack.dgecon(lu, anorm, norm="I")
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_LIMIT:
        raise SingularMatrix(
            f"{name} is numerically singular (rcond={rcond:.3e})"
        )
    return lu, piv


def build_stepping(
    F: np.ndarray,
    S2: np.ndarray,
    A1: np.ndarray,
    A0: np.ndarray,
    Am1: np.ndarray,
    dt: float,
    dl: float,
) -> SystemMatrices:
    """Derive Gamma and the stepping matrices H, K, M via linear solves."""
    Finv = invert_F(F)
    N = F.shape[0]
    G = Finv / dt**2
    Gamma = np.zeros((2 * N, 2 * N))
    bm = 2 * np.arange(N)
    Gamma[np.ix_(bm, bm)] = G

    lhs = A1 - Gamma
    lu, piv = _lu_with_rcond(lhs, "A1 - Gamma")
    H = lapack.dgetrs(lu, piv, -2.0 * Gamma - A0)[0]
    K = lapack.dgetrs(lu, piv, Gamma - Am1)[0]
    M = lapack.dgetrs(lu, piv, S2.T)[0]
    return SystemMatrices(
        F=F, S2=S2, Gamma=Gamma, A1=A1, A0=A0, Am1=Am1,
        H=H, K=K, M=M, Finv=Finv, G=G, dt=dt, dl=dl,
    )


def assemble(
    constants: PhysicalConstants,
    coeffs: ElementCoefficients,
    fs: float,
    gamma=None,
    pin_tm: bool = False,
) -> SystemMatrices:
    """Build all matrices for one model instance at sampling rate ``fs``.

    ``pin_tm`` replaces the inert TM recursion rows with X2_{j+1} = 0;
    used by the passive variant, whose TM is uncoupled and would otherwise
    contribute marginal double-integrator modes to the spectrum.
    """
    if fs <= 0:
        raise ValueError("fs must be positive")
    dt = 1.0 / fs
    dc = discrete_coefficients(coeffs, constants, dt, gamma=gamma)
    if pin_tm:
        N = coeffs.x.shape[0]
        ones = np.ones(N)
        zeros = np.zeros(N)
        dc = DiscreteCoefficients(
            alpha1=dc.alpha1, alpha0=dc.alpha0, alpha_m1=dc.alpha_m1,
            beta1=dc.beta1, beta0=dc.beta0,
            eps1=zeros, eps0=zeros,
            delta1=ones, delta0=zeros, delta_m1=zeros,
        )
    F = build_F(constants, constants.dl)
    S2 = build_S2(constants.N)
    A1, A0, Am1 = build_block_matrices(dc)
    return build_stepping(F, S2, A1, A0, Am1, dt, constants.dl)


def dump_matrix_csv(matrix: np.ndarray, path) -> None:
    """Write a matrix as CSV, one row per line, full double precision."""
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")
