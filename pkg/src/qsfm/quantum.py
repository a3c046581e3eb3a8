"""Tight-binding dynamics of two coupled position-based qubits.

Units: hbar = 1 and e = 1. The two-qubit basis is ordered
|1A1B>, |1A2B>, |2A1B>, |2A2B>.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DomainError, InvalidDensityError, ValidationError

HBAR = 1.0


@dataclass(frozen=True)
class TightBindingHamiltonian:
    H: np.ndarray
    dissipative: bool = False
    meta: dict = field(default_factory=dict)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return linalg.is_hermitian(self.H, tol)


def _complex(x) -> complex:
    if isinstance(x, (list, tuple, np.ndarray)):
        if len(x) != 2:
            raise ValidationError("complex values are given as [re, im]")
        return complex(float(x[0]), float(x[1]))
    return complex(x)


def two_qubit_hamiltonian(E_p, t_sA, t_sB, q: float = 0.0, d=(1.0, 1.0, 1.0, 1.0),
                          dissipative_im_Ep=None) -> TightBindingHamiltonian:
    """Two qubits A and B coupled by Coulomb terms q^2/d.

    E_p = (E_p1A, E_p2A, E_p1B, E_p2B); d = (d_1A1B, d_1A2B, d_2A1B, d_2A2B).
    ``t_sA`` is the hopping t_s(2A->1A), placed above the diagonal, and its
    conjugate t_s(1A->2A) goes below; likewise for B. Complex hoppings may be
    given as [re, im]. ``dissipative_im_Ep`` adds i*Im to each site energy.
    """
    E_p = np.asarray(E_p, dtype=complex)
    if E_p.shape != (4,):
        raise ValidationError("E_p needs 4 entries (1A, 2A, 1B, 2B)")
    if dissipative_im_Ep is not None:
        im = np.asarray(dissipative_im_Ep, dtype=float)
        if im.shape != (4,):
            raise ValidationError("dissipative_im_Ep needs 4 entries")
        E_p = E_p + 1j * im
    d = np.asarray(d, dtype=float)
    if d.shape != (4,):
        raise ValidationError("d needs 4 entries (1A1B, 1A2B, 2A1B, 2A2B)")
    if np.any(d <= 0):
        raise DomainError("distances d must be positive")
    tA, tB = _complex(t_sA), _complex(t_sB)
    e1A, e2A, e1B, e2B = E_p
    coul = q ** 2 / d
    H = np.zeros((4, 4), dtype=complex)
    H[0, 0] = e1A + e1B + coul[0]
    H[1, 1] = e1A + e2B + coul[1]
    H[2, 2] = e2A + e1B + coul[2]
    H[3, 3] = e2A + e2B + coul[3]
    H[0, 1] = H[2, 3] = tB
    H[1, 0] = H[3, 2] = np.conj(tB)
    H[0, 2] = H[1, 3] = tA
    H[2, 0] = H[3, 1] = np.conj(tA)
    meta = {"E_p": E_p, "t_sA": tA, "t_sB": tB, "q": q, "d": d}
    return TightBindingHamiltonian(H, dissipative_im_Ep is not None, meta)


def hamiltonian_from_json(obj: dict) -> TightBindingHamiltonian:
    """Build from {"E_p", "t_s": {"1A2A", "1B2B"}, "q", "d", "dissipative_im_Ep"}."""
    try:
        ts = obj["t_s"]
        return two_qubit_hamiltonian(obj["E_p"], ts["1A2A"], ts["1B2B"], obj.get("q", 0.0),
                                     obj.get("d", (1.0, 1.0, 1.0, 1.0)),
                                     obj.get("dissipative_im_Ep"))
    except KeyError as exc:
        raise ValidationError(f"missing Hamiltonian field {exc}") from None


# --------------------------------------------------------------------------
# states and evolution

def probabilities(psi) -> np.ndarray:
    return np.abs(np.asarray(psi)) ** 2


def phases(psi) -> np.ndarray:
    return np.angle(np.asarray(psi))


def unwrapped_phases(psi_traj) -> np.ndarray:
    """Continuous phases Theta_k(t) along a trajectory of shape (n, N)."""
    return np.unwrap(np.angle(np.asarray(psi_traj)), axis=0)


def from_polar(p, theta) -> np.ndarray:
    return np.sqrt(np.asarray(p, dtype=float)) * np.exp(1j * np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class QuantumTrajectory:
    t: np.ndarray     # (n,)
    psi: np.ndarray   # (n, N) complex

    @property
    def p(self) -> np.ndarray:
        return probabilities(self.psi)

    @property
    def theta(self) -> np.ndarray:
        return unwrapped_phases(self.psi)

    @property
    def norm(self) -> np.ndarray:
        return self.p.sum(axis=1)


def _H_matrix(H):
    if isinstance(H, TightBindingHamiltonian):
        return H.H
    return H


def evolve_quantum(H, psi0, t0: float, t1: float, steps: int) -> QuantumTrajectory:
    """Solve i dpsi/dt = H psi with per-step exponentials exp(-i H dt).

    ``H`` may be a matrix, a TightBindingHamiltonian, or a callable t -> matrix
    (midpoint exponential per step).
    """
    H = _H_matrix(H)
    psi0 = np.asarray(psi0, dtype=complex)
    if callable(H):
        gen = lambda t: -1j * np.asarray(_H_matrix(H(t)), dtype=complex) / HBAR
    else:
        gen = -1j * np.asarray(H, dtype=complex) / HBAR
    Us = linalg.propagate(gen, t0, t1, steps, return_all=True)
    t = np.linspace(t0, t1, steps + 1)
    return QuantumTrajectory(t, Us @ psi0)


def evolve_exact(H, psi0, times) -> np.ndarray:
    """Constant Hermitian H: psi(t) by eigendecomposition at arbitrary times."""
    H = np.asarray(_H_matrix(H), dtype=complex)
    w, V = np.linalg.eigh(H)
    c = V.conj().T @ np.asarray(psi0, dtype=complex)
    times = np.asarray(times, dtype=float)
    return (np.exp(-1j * np.outer(times, w) / HBAR) * c) @ V.T


# --------------------------------------------------------------------------
# density matrices and entropy

def density_matrix(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def _trace(rho) -> complex:
    tr = np.trace(rho)
    if abs(tr) == 0:
        raise DomainError("density matrix has zero trace")
    return tr


def reduce_A(rho) -> np.ndarray:
    """Trace out B: [[r11+r22, r13+r24], [r31+r42, r33+r44]] / Tr rho."""
    r = np.asarray(rho)
    if r.shape != (4, 4):
        raise ValidationError("reduce_A expects a 4x4 matrix")
    out = np.array([[r[0, 0] + r[1, 1], r[0, 2] + r[1, 3]],
                    [r[2, 0] + r[3, 1], r[2, 2] + r[3, 3]]])
    return out / _trace(r)


def reduce_B(rho) -> np.ndarray:
    """Trace out A: [[r11+r33, r12+r34], [r21+r43, r22+r44]] / Tr rho."""
    r = np.asarray(rho)
    if r.shape != (4, 4):
        raise ValidationError("reduce_B expects a 4x4 matrix")
    out = np.array([[r[0, 0] + r[2, 2], r[0, 1] + r[2, 3]],
                    [r[1, 0] + r[3, 2], r[1, 1] + r[3, 3]]])
    return out / _trace(r)


def von_neumann_entropy(rho, base: str | float = "e") -> float:
    """-sum lambda ln lambda over eigenvalues above 1e-14.

    Eigenvalues in [-1e-10, 0) are clipped to zero; anything below -1e-8 is an
    invalid density matrix. ``base`` may be "e" (nats), 2 or "bits".
    """
    rho = np.asarray(rho)
    herm = 0.5 * (rho + rho.conj().T)
    lam = np.linalg.eigvalsh(herm)
    if np.any(lam < -1e-8):
        raise InvalidDensityError(f"negative eigenvalue {lam.min():.3e}")
    lam = np.where((lam < 0) & (lam >= -1e-10), 0.0, lam)
    lam = lam[lam > 1e-14]
    S = float(-np.sum(lam * np.log(lam)))
    if base in (2, "2", "bits"):
        S /= np.log(2)
    elif base not in ("e", "nats"):
        S /= np.log(float(base))
    return S + 0.0


def entanglement_entropies(psi, base="e") -> tuple[float, float]:
    rho = density_matrix(psi)
    return von_neumann_entropy(reduce_A(rho), base), von_neumann_entropy(reduce_B(rho), base)


def liouville_rhs(H, rho) -> np.ndarray:
    """d rho/dt = (H rho - rho H^dagger) / (i hbar)."""
    H = np.asarray(_H_matrix(H))
    return (H @ rho - rho @ H.conj().T) / (1j * HBAR)


# --------------------------------------------------------------------------
# vector potential

def ab_shifts(A_x, delta_L: float, e_over_hbar: float = 1.0) -> np.ndarray:
    """Phase shifts of Theta_I..Theta_IV for A_x at sites (1A, 2A, 1B, 2B)."""
    a1A, a2A, a1B, a2B = (float(a) for a in A_x)
    k = delta_L * e_over_hbar
    return k * np.array([a1A + a1B, a1A + a2B, a2A + a1B, a2A + a2B])


def apply_ab_phases(state, A_x, delta_L: float, e_over_hbar: float = 1.0, kind: str = "auto"):
    """Shift node phases by the vector-potential terms.

    ``state`` is either a complex amplitude vector (kind "psi") or a list of
    four phases (kind "theta"); "auto" picks by dtype.
    """
    arr = np.asarray(state)
    if len(A_x) != 4:
        raise ValidationError("A_x needs values at sites 1A, 2A, 1B, 2B")
    shifts = ab_shifts(A_x, delta_L, e_over_hbar)
    if kind == "auto":
        kind = "psi" if np.iscomplexobj(arr) else "theta"
    if kind == "psi":
        return arr * np.exp(1j * shifts)
    return arr.astype(float) + shifts


# --------------------------------------------------------------------------
# phase-explicit form

def phase_explicit_residual(H, t, psi_traj, theta_dot=None) -> np.ndarray:
    """Residual of the phase-explicit rate equation along a trajectory.

    dp_k/dt = (2/(i hbar)) sqrt(p_k) e^{-i Theta_k} [(H gamma)_k + hbar Theta'_k gamma_k]
    restricted to its real part; the imaginary part gives the phase equation.
    Derivatives come from centered differences, so interior samples only.
    """
    H = np.asarray(_H_matrix(H))
    t = np.asarray(t, dtype=float)
    psi = np.asarray(psi_traj)
    p = probabilities(psi)
    theta = unwrapped_phases(psi)
    dt = t[2:] - t[:-2]
    pdot = (p[2:] - p[:-2]) / dt[:, None]
    if theta_dot is None:
        theta_dot = (theta[2:] - theta[:-2]) / dt[:, None]
    else:
        theta_dot = np.asarray(theta_dot)
    g = psi[1:-1]
    Hg = g @ H.T
    rhs = (2 / (1j * HBAR)) * np.sqrt(p[1:-1]) * np.exp(-1j * theta[1:-1]) * (
        Hg + HBAR * theta_dot * g)
    return np.abs(pdot - rhs)
