"""Schroedinger to tight-binding: 1D eigensolver, Wannier pairs, 2D tensor transform.

Units: hbar = m = 1. Region "left" (1D) is x <= 0; region I (2D) is x < 0, y > 0.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal

from . import linalg
from .errors import (
    ConvergenceError,
    DomainError,
    NearZeroProbabilityError,
    SingularRatioError,
    ValidationError,
)

log = logging.getLogger(__name__)

HBAR = 1.0
RATIO_DEN_TOL = 1e-12


class ResolutionWarning(UserWarning):
    """Grid spacing too coarse for the requested levels."""


# --------------------------------------------------------------------------
# grid and potentials

@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 64:
            raise ValidationError(f"n_points must be >= 64, got {self.n_points}")
        if not self.x_min < 0 < self.x_max:
            raise ValidationError("grid must straddle x = 0")
        k = -self.x_min / self.h
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
            raise ValidationError("x = 0 must lie on a grid node")

    @classmethod
    def centered(cls, half_width: float, n_points: int) -> "Grid1D":
        """Grid with node 0 at x = 0: x_i = (i - n//2) h, h = half_width / (n//2).

        For even n the right end sits one step short of +half_width.
        """
        m = n_points // 2
        h = half_width / m
        return cls(-half_width, (n_points - 1 - m) * h, n_points)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n_points)

    @property
    def i0(self) -> int:
        return int(round(-self.x_min / self.h))


def double_well(barrier_height: float, well_width: float, separation: float):
    """Square double well: V = 0 for s/2 <= |x| <= s/2 + w, V = barrier_height elsewhere."""
    if well_width <= 0 or separation < 0:
        raise DomainError("well_width must be positive and separation nonnegative")
    lo, hi = separation / 2, separation / 2 + well_width

    def V(x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.where((ax >= lo) & (ax <= hi), 0.0, float(barrier_height))

    return V


def table_potential(x, V):
    x = np.asarray(x, dtype=float)
    V = np.asarray(V, dtype=float)
    if x.shape != V.shape or x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
        raise ValidationError("table potential needs increasing x and matching V")
    return lambda xq: np.interp(xq, x, V)


def potential_from_json(obj: dict):
    kind = obj.get("type")
    try:
        if kind == "double_well":
            return double_well(obj["barrier_height"], obj["well_width"], obj["separation"])
        if kind == "table":
            return table_potential(obj["x"], obj["V"])
    except KeyError as exc:
        raise ValidationError(f"potential is missing {exc}") from None
    raise ValidationError(f"unknown potential type {kind!r}")


# --------------------------------------------------------------------------
# eigensolver

@dataclass(frozen=True)
class EigenPair:
    E: float
    psi: np.ndarray


def _fix_sign(psi: np.ndarray, i0: int, h: float) -> np.ndarray:
    # left integral positive; fall back to the sign at the largest |psi|
    s = trapezoid(psi[: i0 + 1], dx=h)
    if abs(s) < 1e-12:
        s = psi[np.argmax(np.abs(psi))]
    return psi if s >= 0 else -psi


def solve_1d_eigen(potential, grid: Grid1D, n_levels: int = 2) -> list[EigenPair]:
    """Lowest eigenpairs of -(1/2) d^2/dx^2 + V with Dirichlet ends.

    Three-point differences on the interior nodes; psi vanishes at both end
    nodes and is normalized so that sum |psi|^2 h = 1. Sign: the integral of
    psi over x <= 0 is made positive.
    """
    if not 1 <= n_levels <= 8:
        raise ValidationError("n_levels must be in 1..8")
    x, h = grid.x, grid.h
    V = np.asarray(potential(x), dtype=float) * np.ones_like(x)
    if not np.all(np.isfinite(V)):
        raise DomainError("potential is not finite on the grid")
    Vi = V[1:-1]
    diag = 1.0 / h ** 2 + Vi
    off = np.full(len(Vi) - 1, -0.5 / h ** 2)
    E, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1))
    out = []
    for k in range(n_levels):
        psi = np.zeros_like(x)
        psi[1:-1] = vecs[:, k] / np.sqrt(h)
        out.append(EigenPair(float(E[k]), _fix_sign(psi, grid.i0, h)))
    # FD error for a level at kinetic energy K is about K^2 h^2 / 6
    err = (E - V.min()) ** 2 * h ** 2 / 6
    if n_levels > 1 and np.min(np.diff(E)) < 10 * err.max():
        warnings.warn(f"level spacing {np.min(np.diff(E)):.3e} is below 10x the "
                      f"discretization error {err.max():.3e}; refine the grid", ResolutionWarning)
    return out


# --------------------------------------------------------------------------
# 1D Wannier pair

def left_integral(f, grid: Grid1D):
    return trapezoid(np.asarray(f)[: grid.i0 + 1], dx=grid.h)


def left_mass(w, grid: Grid1D) -> float:
    return float(left_integral(np.abs(w) ** 2, grid))


def localization_ratio(psi1, psi2, grid: Grid1D) -> float:
    """r = int_{x<0} (psi1 psi2* + psi1* psi2) / int_{x<0} (|psi1|^2 - |psi2|^2).

    A denominator below 1e-12 returns an infinity carrying the numerator's sign.
    """
    psi1, psi2 = np.asarray(psi1), np.asarray(psi2)
    num = float(np.real(left_integral(psi1 * np.conj(psi2) + np.conj(psi1) * psi2, grid)))
    den = float(np.real(left_integral(np.abs(psi1) ** 2 - np.abs(psi2) ** 2, grid)))
    if abs(den) < RATIO_DEN_TOL:
        return float(np.copysign(np.inf, num))
    return num / den


def build_wannier_pair(psi1, psi2, gamma: float):
    """w_L = cos g psi1 + sin g psi2, w_R = -sin g psi1 + cos g psi2 (global phase 0)."""
    c, s = np.cos(gamma), np.sin(gamma)
    psi1, psi2 = np.asarray(psi1), np.asarray(psi2)
    return c * psi1 + s * psi2, -s * psi1 + c * psi2


def mixing_angle(r: float, psi1=None, psi2=None, grid: Grid1D | None = None) -> float:
    """gamma = arctan(r) / 2, then the candidate among gamma, gamma +- pi/2 and
    gamma + pi giving the largest left mass of w_L (when wavefunctions are given).
    """
    g = 0.5 * np.arctan(r)           # arctan(+-inf) = +-pi/2
    if psi1 is None or psi2 is None or grid is None:
        return float(g)
    cands = [g, g + np.pi / 2, g - np.pi / 2, g + np.pi]
    masses = [left_mass(build_wannier_pair(psi1, psi2, c)[0], grid) for c in cands]
    return float(cands[int(np.argmax(masses))])


def orthonormality_residuals(wL, wR, grid: Grid1D) -> np.ndarray:
    """(<wL|wL> - 1, <wR|wR> - 1, <wL|wR>, <wR|wL>) by trapezoid over the grid."""
    h = grid.h
    ip = lambda a, b: trapezoid(np.conj(a) * b, dx=h)
    return np.abs(np.array([ip(wL, wL) - 1, ip(wR, wR) - 1, ip(wL, wR), ip(wR, wL)]))


def _tb(E1, E2, gamma):
    c2, s2 = np.cos(gamma) ** 2, np.sin(gamma) ** 2
    ts = 0.5 * (E2 - E1) * np.sin(2 * gamma)
    return np.array([[E1 * c2 + E2 * s2, ts], [ts, E1 * s2 + E2 * c2]])


def tb_params(E1: float, E2: float, r: float) -> np.ndarray:
    """Tight-binding 2x2 matrix from eigenenergies and the localization ratio."""
    if np.iscomplexobj(E1) or np.iscomplexobj(E2):
        raise DomainError("tb_params takes real energies; use tb_params_dissipative")
    if E1 > E2:
        raise DomainError("tb_params requires E1 <= E2")
    a = np.arctan(r)
    return np.array([
        [E1 + np.sin(0.5 * a) ** 2 * (E2 - E1), 0.5 * (E2 - E1) * np.sin(a)],
        [0.5 * (E2 - E1) * np.sin(a), E1 + np.cos(0.5 * a) ** 2 * (E2 - E1)],
    ])


def tb_params_from_angle(E1: float, E2: float, gamma: float) -> np.ndarray:
    """Same matrix for an arbitrary (branch-selected) mixing angle."""
    return _tb(float(E1), float(E2), gamma)


def tb_params_dissipative(E1: complex, E2: complex, r: float) -> np.ndarray:
    """tb(Re E) + i tb(Im E); non-Hermitian whenever an imaginary part is nonzero."""
    g = 0.5 * np.arctan(r)
    return _tb(np.real(E1), np.real(E2), g) + 1j * _tb(np.imag(E1), np.imag(E2), g)


@dataclass(frozen=True)
class WannierAmplitudes:
    alpha: np.ndarray
    beta: np.ndarray
    ratio: np.ndarray | None


def wannier_amplitudes(E1, E2, r, p_E1, p_E2, gamma_E1=0.0, gamma_E2=0.0, t=0.0,
                       t0: float = 0.0, gamma: float | None = None,
                       with_ratio: bool = True) -> WannierAmplitudes:
    """Left/right Wannier amplitudes of the state sum_k sqrt(p_k) e^{i gamma_Ek} e^{-i E_k (t - t0)} psi_k.

    alpha_c = cos g c1 + sin g c2 and beta_c = -sin g c1 + cos g c2. The ratio
    alpha_c / beta_c is evaluated from the reduced form in tan g and sqrt(p1/p2).
    """
    if abs(p_E1 + p_E2 - 1) > 1e-9 or p_E1 < 0 or p_E2 < 0:
        raise ValidationError("p_E1 and p_E2 must be nonnegative and sum to 1")
    g = 0.5 * np.arctan(r) if gamma is None else gamma
    t = np.asarray(t, dtype=float)
    c1 = np.sqrt(p_E1) * np.exp(1j * gamma_E1) * np.exp(-1j * E1 * (t - t0) / HBAR)
    c2 = np.sqrt(p_E2) * np.exp(1j * gamma_E2) * np.exp(-1j * E2 * (t - t0) / HBAR)
    alpha = np.cos(g) * c1 + np.sin(g) * c2
    beta = -np.sin(g) * c1 + np.cos(g) * c2
    ratio = None
    if with_ratio:
        if p_E2 == 0 or np.any(np.abs(beta) < 1e-14):
            bad = np.atleast_1d(t)[np.argmin(np.abs(np.atleast_1d(beta)))]
            raise SingularRatioError(f"beta_c vanishes at t = {bad:.6g}", time=float(bad))
        tg = np.tan(g)
        q = np.sqrt(p_E1 / p_E2)
        ph = np.exp(-1j * (E2 - E1) * (t - t0) / HBAR) * np.exp(1j * (gamma_E2 - gamma_E1))
        ratio = (q + tg * ph) / (-tg * q + ph)
    return WannierAmplitudes(alpha, beta, ratio)


@dataclass(frozen=True)
class WannierReport:
    gamma: float
    r: float
    E: list
    tb_matrix: np.ndarray
    left_mass: float
    orthonormality_residuals: np.ndarray
    wL: np.ndarray = field(repr=False)
    wR: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "r": self.r, "E": list(self.E),
                "tb_matrix": np.asarray(self.tb_matrix).tolist(),
                "left_mass": self.left_mass,
                "orthonormality_residuals": np.asarray(self.orthonormality_residuals).tolist()}


def wannier_1d(potential, grid: Grid1D) -> WannierReport:
    """Full 1D pipeline: two lowest levels, ratio, branch-selected angle, tb matrix."""
    p1, p2 = solve_1d_eigen(potential, grid, 2)
    r = localization_ratio(p1.psi, p2.psi, grid)
    g = mixing_angle(r, p1.psi, p2.psi, grid)
    wL, wR = build_wannier_pair(p1.psi, p2.psi, g)
    return WannierReport(g, r, [p1.E, p2.E], tb_params_from_angle(p1.E, p2.E, g),
                         left_mass(wL, grid), orthonormality_residuals(wL, wR, grid), wL, wR)


def crank_nicolson(potential, grid: Grid1D, psi0, t1: float, dt: float):
    """Direct Schroedinger integration on the grid (Dirichlet), Crank-Nicolson.

    Returns (t, psi) with psi of shape (steps + 1, n_points).
    """
    from scipy.sparse import diags, identity
    from scipy.sparse.linalg import splu

    h = grid.h
    V = np.asarray(potential(grid.x), dtype=float)[1:-1]
    n = len(V)
    H = diags([np.full(n - 1, -0.5 / h ** 2), 1.0 / h ** 2 + V, np.full(n - 1, -0.5 / h ** 2)],
              [-1, 0, 1], format="csc")
    I = identity(n, format="csc")
    A = (I + 0.5j * dt * H).tocsc()
    B = (I - 0.5j * dt * H).tocsc()
    lu = splu(A)
    steps = int(round(t1 / dt))
    out = np.zeros((steps + 1, grid.n_points), dtype=complex)
    y = np.asarray(psi0, dtype=complex)[1:-1]
    out[0, 1:-1] = y
    for k in range(steps):
        y = lu.solve(B @ y)
        out[k + 1, 1:-1] = y
    return dt * np.arange(steps + 1), out


def oscillation_period(t, signal) -> float:
    """Mean spacing of upward crossings of the signal's mid level (linear interpolation)."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(signal, dtype=float)
    s = s - 0.5 * (s.max() + s.min())
    idx = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    if len(idx) < 2:
        raise ValidationError("fewer than two crossings; integrate longer")
    tc = t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])
    return float(np.mean(np.diff(tc)))


# --------------------------------------------------------------------------
# 2D tensor-product Wannier basis

def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class WannierBasis2D:
    theta1: float
    theta2: float
    W: np.ndarray
    W_inv: np.ndarray

    @property
    def u(self) -> np.ndarray:
        """(u1, u2, u3, u4) = (c1 c2, -c1 s2, -s1 c2, s1 s2), the first row of W^-1."""
        return self.W_inv[0].copy()

    @property
    def alpha(self) -> np.ndarray:
        return np.array([np.cos(self.theta1), np.sin(self.theta1)])

    @property
    def beta(self) -> np.ndarray:
        return np.array([np.cos(self.theta2), np.sin(self.theta2)])


def wannier2d_transform(theta1: float, theta2: float) -> WannierBasis2D:
    """W = R(theta1) kron R(theta2); index k = 2 i + j with i the y level, j the x level."""
    W = np.kron(rotation(theta1), rotation(theta2))
    W_inv = np.kron(rotation(-theta1), rotation(-theta2))
    return WannierBasis2D(float(theta1), float(theta2), W, W_inv)


def wannier_functions_2d(basis: WannierBasis2D, psis) -> np.ndarray:
    """w_m = sum_k W[m, k] psi_k for a stack of four eigenfunctions."""
    psis = np.asarray(psis)
    return np.tensordot(basis.W, psis, axes=(1, 0))


def wannier_hamiltonian(E, theta1: float, theta2: float) -> np.ndarray:
    """H_w = W diag(E) W^-1 (complex E allowed)."""
    E = np.asarray(E)
    if E.shape != (4,):
        raise ValidationError("E needs four energies")
    b = wannier2d_transform(theta1, theta2)
    return (b.W * E) @ b.W_inv


def wannier_hamiltonian_closed_form(E, theta1: float, theta2: float) -> np.ndarray:
    """Entry-by-entry closed forms in alpha = (cos th1, sin th1), beta = (cos th2, sin th2)."""
    E1, E2, E3, E4 = np.asarray(E)
    a1, a2 = np.cos(theta1), np.sin(theta1)
    b1, b2 = np.cos(theta2), np.sin(theta2)
    H = np.empty((4, 4), dtype=np.result_type(E1, float))
    H[0, 0] = a1**2 * (b1**2 * E1 + b2**2 * E2) + a2**2 * (b1**2 * E3 + b2**2 * E4)
    H[1, 1] = a1**2 * (b2**2 * E1 + b1**2 * E2) + a2**2 * (b2**2 * E3 + b1**2 * E4)
    H[2, 2] = a2**2 * (b1**2 * E1 + b2**2 * E2) + a1**2 * (b1**2 * E3 + b2**2 * E4)
    H[3, 3] = a2**2 * (b2**2 * E1 + b1**2 * E2) + a1**2 * (b2**2 * E3 + b1**2 * E4)
    H[0, 1] = H[1, 0] = b1 * b2 * (a1**2 * (-E1 + E2) + a2**2 * (-E3 + E4))
    H[2, 3] = H[3, 2] = b1 * b2 * (a2**2 * (-E1 + E2) + a1**2 * (-E3 + E4))
    H[0, 2] = H[2, 0] = a1 * a2 * (b1**2 * (-E1 + E3) + b2**2 * (-E2 + E4))
    H[1, 3] = H[3, 1] = a1 * a2 * (b2**2 * (-E1 + E3) + b1**2 * (-E2 + E4))
    x = a1 * a2 * b1 * b2 * (E1 - E2 - E3 + E4)
    H[0, 3] = H[3, 0] = H[1, 2] = H[2, 1] = x
    return H


def region_mass_2d(gamma_ij, theta1: float, theta2: float) -> float:
    """Region-I mass of w1 = sum_k W[0, k] psi_k."""
    v = wannier2d_transform(theta1, theta2).W[0]
    return float(v @ np.asarray(gamma_ij) @ v)


def stationarity_residuals(gamma_ij, theta1: float, theta2: float) -> np.ndarray:
    """Both tan-polynomial stationarity equations evaluated at (theta1, theta2).

    Each is sum_ij (a_i b_j + a_j b_i) gamma_ij with b = (1, t2, t1, t1 t2) and a
    the corresponding angular derivative direction.
    """
    G = np.asarray(gamma_ij, dtype=float)
    t1, t2 = np.tan(theta1), np.tan(theta2)
    b = np.array([1.0, t2, t1, t1 * t2])
    out = []
    for a in (np.array([-t1, -t1 * t2, 1.0, t2]), np.array([-t2, 1.0, -t1 * t2, t1])):
        out.append(float(a @ G @ b + b @ G @ a))
    return np.array(out)


def _best_angle(M) -> float:
    # maximizer of (c, s) M (c, s)^T over the angle
    return 0.5 * np.arctan2(2 * M[0, 1], M[0, 0] - M[1, 1])


def _alternate(G, th1, th2, tol, max_iter):
    G4 = G.reshape(2, 2, 2, 2)          # (i, j, i', j')
    for _ in range(max_iter):
        r2 = np.array([np.cos(th2), np.sin(th2)])
        n1 = _best_angle(np.einsum("j,ijkl,l->ik", r2, G4, r2))
        r1 = np.array([np.cos(n1), np.sin(n1)])
        n2 = _best_angle(np.einsum("i,ijkl,k->jl", r1, G4, r1))
        d = max(abs(n1 - th1), abs(n2 - th2))
        th1, th2 = n1, n2
        if d < tol:
            return th1, th2
    raise ConvergenceError(f"angle iteration did not converge in {max_iter} steps",
                           last=(th1, th2))


@dataclass(frozen=True)
class AngleSolution:
    theta1: float
    theta2: float
    mass: float


def solve_angles_2d(gamma_ij, tol: float = 1e-12, max_iter: int = 200) -> list[AngleSolution]:
    """Stationary angles of the region-I mass, by alternating closed-form solves.

    For fixed theta2 the mass is a quadratic form in (cos th1, sin th1), so its
    stationarity condition is a quadratic in tan th1 with the maximizing root
    0.5 atan2(2 M01, M00 - M11); likewise for theta2. Starting from theta = 0
    and a few extra seeds, distinct fixed points (mod pi) are returned sorted by
    descending mass.
    """
    G = np.asarray(gamma_ij, dtype=float)
    if G.shape != (4, 4):
        raise ValidationError("gamma_ij must be 4x4")
    G = 0.5 * (G + G.T)
    seeds = [(0.0, 0.0)] + [(a, b) for a in (0, np.pi / 4, -np.pi / 4, np.pi / 2)
                            for b in (0, np.pi / 4, -np.pi / 4, np.pi / 2)][1:]
    found: list[AngleSolution] = []
    first_error = None
    for s in seeds:
        try:
            th1, th2 = _alternate(G, *s, tol, max_iter)
        except ConvergenceError as exc:
            if s == (0.0, 0.0):
                first_error = exc
            continue
        th1 = (th1 + np.pi / 2) % np.pi - np.pi / 2
        th2 = (th2 + np.pi / 2) % np.pi - np.pi / 2
        dup = any(abs(np.angle(np.exp(2j * (th1 - f.theta1)))) < 1e-8 and
                  abs(np.angle(np.exp(2j * (th2 - f.theta2)))) < 1e-8 for f in found)
        if not dup:
            found.append(AngleSolution(float(th1), float(th2), region_mass_2d(G, th1, th2)))
    if not found:
        raise first_error or ConvergenceError("no fixed point found")
    return sorted(found, key=lambda f: -f.mass)


def box_overlaps(L: float = 1.0) -> np.ndarray:
    """Region-I overlaps for the separable square box [-L/2, L/2]^2.

    Levels (nx, ny) = (1,1), (2,1), (1,2), (2,2); gamma = A_y kron A_x with
    A = [[1/2, a], [a, 1/2]], a = 4 / (3 pi), independent of L. The second
    x level is signed to be positive on x < 0 and the second y level positive
    on y > 0.
    """
    a = 4.0 / (3.0 * np.pi)
    A = np.array([[0.5, a], [a, 0.5]])
    return np.kron(A, A)


def box_eigenfunctions(x, y, L: float = 1.0) -> np.ndarray:
    """The four lowest separable box states on a meshgrid, ordered as in box_overlaps."""
    k = np.sqrt(2.0 / L)
    phi = [k * np.cos(np.pi * x / L), -k * np.sin(2 * np.pi * x / L)]
    chi = [k * np.cos(np.pi * y / L), k * np.sin(2 * np.pi * y / L)]
    return np.array([chi[i] * phi[j] for i in range(2) for j in range(2)])


def dissipative_wannier_term(theta1_samples, theta2_samples, dt: float) -> np.ndarray:
    """-i hbar (dW/dt) W^-1 at the central sample by centered differences."""
    th1 = np.asarray(theta1_samples, dtype=float)
    th2 = np.asarray(theta2_samples, dtype=float)
    if th1.shape != th2.shape or th1.ndim != 1 or len(th1) < 3:
        raise ValidationError("need at least 3 samples of each angle")
    m = len(th1) // 2
    Wp = wannier2d_transform(th1[m + 1], th2[m + 1]).W
    Wm = wannier2d_transform(th1[m - 1], th2[m - 1]).W
    dW = (Wp - Wm) / (2 * dt)
    return -1j * HBAR * dW @ wannier2d_transform(th1[m], th2[m]).W_inv


# --------------------------------------------------------------------------
# Wannier amplitudes as an affine rate model

@dataclass(frozen=True)
class WannierFSM:
    t: np.ndarray
    M: np.ndarray        # (n, 8, 8) over (P1re, P1im, ..., P4re, P4im)
    b: np.ndarray        # (n, 8), offset for the shifted variables
    P: np.ndarray        # (n, 8), eta cos xi and eta sin xi

    @property
    def P_shifted(self) -> np.ndarray:
        return 1.0 + self.P


def fsm_matrix(H_w, eta, eta_dot, eps: float = 1e-9) -> np.ndarray:
    """8x8 rate matrix for z_k = eta_k e^{i xi_k} given the Wannier Hamiltonian.

    The amplitudes are sqrt(eta_k) e^{i xi_k}, so
    dz_k/dt = (eta_k'/(2 eta_k)) z_k - (i/hbar) sum_l H_kl sqrt(eta_k/eta_l) z_l.
    """
    eta = np.asarray(eta, dtype=float)
    bad = np.flatnonzero(eta <= eps)
    if len(bad):
        raise NearZeroProbabilityError(f"eta_{bad[0] + 1} = {eta[bad[0]]:.3e} below eps",
                                       component=int(bad[0]))
    H = np.asarray(H_w, dtype=complex) / HBAR
    r = np.sqrt(np.outer(eta, 1.0 / eta))
    HR, HI = H.real * r, H.imag * r
    d = np.asarray(eta_dot, dtype=float) / (2 * eta)
    M = np.zeros((8, 8))
    M[0::2, 0::2] = HI
    M[0::2, 1::2] = HR
    M[1::2, 0::2] = -HR
    M[1::2, 1::2] = HI
    idx = np.arange(8)
    M[idx, idx] += np.repeat(d, 2)
    return M


def fsm_from_wannier(H_w, t, eta_traj, xi_traj, eps: float = 1e-9) -> WannierFSM:
    """M(t) and the shifted offset b(t) = -M(t) 1 along a sampled (eta, xi) trajectory.

    ``H_w`` is a constant 4x4 matrix or a stack of shape (n, 4, 4).
    """
    t = np.asarray(t, dtype=float)
    eta = np.asarray(eta_traj, dtype=float)
    xi = np.asarray(xi_traj, dtype=float)
    if eta.shape != xi.shape or eta.shape[-1] != 4 or len(t) != len(eta) or len(t) < 2:
        raise ValidationError("eta and xi must be (n, 4) trajectories on t")
    eta_dot = np.gradient(eta, t, axis=0, edge_order=2)
    Hs = np.broadcast_to(np.asarray(H_w), (len(t), 4, 4))
    M = np.array([fsm_matrix(Hs[k], eta[k], eta_dot[k], eps) for k in range(len(t))])
    b = -M.sum(axis=2)
    P = np.empty((len(t), 8))
    P[:, 0::2] = eta * np.cos(xi)
    P[:, 1::2] = eta * np.sin(xi)
    return WannierFSM(t, M, b, P)


def renormalized_probabilities(P_shifted) -> np.ndarray:
    """Shifted components divided by the sum of all eight."""
    P_shifted = np.asarray(P_shifted, dtype=float)
    return P_shifted / P_shifted.sum(axis=-1, keepdims=True)


def evolve_wannier_fsm(model: WannierFSM, shifted: bool = False) -> np.ndarray:
    """RK4 through the sampled model, M and b interpolated linearly between samples.

    Returns P (or 1 + P with ``shifted``) at the sample times.
    """
    t, M, b = model.t, model.M, model.b
    y = (model.P_shifted if shifted else model.P)[0].copy()
    out = [y]
    for k in range(len(t) - 1):
        h = t[k + 1] - t[k]
        Mm, bm = 0.5 * (M[k] + M[k + 1]), 0.5 * (b[k] + b[k + 1])
        if shifted:
            f0 = lambda y, A=M[k], c=b[k]: A @ y + c
            fm = lambda y: Mm @ y + bm
            f1 = lambda y, A=M[k + 1], c=b[k + 1]: A @ y + c
        else:
            f0 = lambda y, A=M[k]: A @ y
            fm = lambda y: Mm @ y
            f1 = lambda y, A=M[k + 1]: A @ y
        k1 = f0(y)
        k2 = fm(y + h / 2 * k1)
        k3 = fm(y + h / 2 * k2)
        k4 = f1(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    return np.array(out)
