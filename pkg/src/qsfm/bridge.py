"""Maps between classical rate machines and tight-binding quantum dynamics.

Classical -> quantum: evolve sqrt(p) under the classical Hamiltonian
H_c = (1/2) diag(p)^(-1/2) S diag(p)^(1/2).

Quantum -> classical: encode each amplitude gamma_k = a_k + i b_k as the pair
(p_k cos^2 Theta_k, p_k sin^2 Theta_k) = (a_k^2, b_k^2) and evolve the 2N
vector under an explicitly synthesized 2N x 2N generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, quantum
from .errors import (
    NearZeroProbabilityError,
    PhaseUndefinedError,
    SingularityError,
    ValidationError,
)

EPS = 1e-9
HBAR = quantum.HBAR


# --------------------------------------------------------------------------
# classical -> quantum

def classical_hamiltonian(S, p, eps: float = EPS) -> np.ndarray:
    """H_c[i, j] = (1/2) sqrt(p_j / p_i) s_ij; H_c sqrt(p) = d sqrt(p)/dt."""
    S = np.asarray(S, dtype=float)
    p = np.asarray(p, dtype=float)
    bad = np.flatnonzero(p <= eps)
    if len(bad):
        k = int(bad[0])
        raise NearZeroProbabilityError(f"p{k + 1} = {p[k]:.3e} is below eps = {eps:g}", component=k)
    r = np.sqrt(p)
    return 0.5 * S * np.outer(1.0 / r, r)


def classical_density(p) -> np.ndarray:
    """rho_c = sqrt(p) sqrt(p)^T (real symmetric, rank one, diagonal p)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValidationError("probabilities must be nonnegative")
    r = np.sqrt(p)
    return np.outer(r, r)


def classical_density_eom_check(S, t, p_traj, eps: float = EPS) -> float:
    """Max residual of d rho_c/dt = H_c rho_c + rho_c H_c^T along a trajectory.

    Uses centered differences, so the residual scales as dt^2.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p_traj, dtype=float)
    rhos = np.array([classical_density(pk) for pk in p])
    worst = 0.0
    for k in range(1, len(t) - 1):
        drho = (rhos[k + 1] - rhos[k - 1]) / (t[k + 1] - t[k - 1])
        Hc = classical_hamiltonian(S, p[k], eps)
        rhs = Hc @ rhos[k] + rhos[k] @ Hc.T
        worst = max(worst, float(np.abs(drho - rhs).max()))
    return worst


def classical_reduced_entropies(rho_c, base="e") -> tuple[float, float]:
    """(S_A, S_B) of the index-sum reductions of a 4x4 classical density."""
    rho_c = np.asarray(rho_c, dtype=float)
    return (quantum.von_neumann_entropy(quantum.reduce_A(rho_c), base),
            quantum.von_neumann_entropy(quantum.reduce_B(rho_c), base))


@dataclass(frozen=True)
class ClassicalToQuantum:
    H_c: np.ndarray
    psi0: np.ndarray
    note: str = ("with t1 = i*hbar*t the sqrt-probability equation reads as a "
                 "Schroedinger equation; all dynamics here run in real time")


def fsm_to_quantum(S, p0, eps: float = EPS) -> ClassicalToQuantum:
    """Classical Hamiltonian at p0 and the zero-phase state sqrt(p0)."""
    p0 = np.asarray(p0, dtype=float)
    return ClassicalToQuantum(classical_hamiltonian(S, p0, eps), np.sqrt(p0))


def evolve_sqrt(S, p0, t0: float, t1: float, steps: int, eps: float = EPS):
    """Evolve x = sqrt(p) under dx/dt = H_c(x^2) x with RK4.

    H_c is re-evaluated from the current state at every stage, since it
    depends on p. Returns (t, x) with x of shape (steps + 1, N).
    """
    S = np.asarray(S, dtype=float)
    x0 = np.sqrt(np.asarray(p0, dtype=float))

    def f(_t, x):
        return classical_hamiltonian(S, x * x, eps) @ x

    x = linalg.rk4(f, x0, t0, t1, steps)
    return np.linspace(t0, t1, steps + 1), x


# --------------------------------------------------------------------------
# quantum -> classical

@dataclass(frozen=True)
class EncodedState:
    P: np.ndarray   # (p1R, p1I, p2R, p2I, ...), shape (..., 2N)

    @property
    def PR(self) -> np.ndarray:
        return self.P[..., 0::2]

    @property
    def PI(self) -> np.ndarray:
        return self.P[..., 1::2]


def encode_state(psi) -> EncodedState:
    """p_kR = p_k cos^2 Theta_k, p_kI = p_k sin^2 Theta_k, interleaved."""
    psi = np.asarray(psi, dtype=complex)
    P = np.empty(psi.shape[:-1] + (2 * psi.shape[-1],))
    P[..., 0::2] = psi.real ** 2
    P[..., 1::2] = psi.imag ** 2
    return EncodedState(P)


def decode_probabilities(enc: EncodedState | np.ndarray, eps: float = EPS):
    """Return (p_k, tan^2 Theta_k); Theta is recoverable only up to sign and pi."""
    P = enc.P if isinstance(enc, EncodedState) else np.asarray(enc, dtype=float)
    PR, PI = P[..., 0::2], P[..., 1::2]
    p = PR + PI
    bad = np.argwhere(np.atleast_2d(PR) <= eps)
    if len(bad):
        k = int(bad[0][-1])
        raise PhaseUndefinedError(f"p{k + 1}R <= eps: tan^2 Theta undefined", component=k)
    return p, PI / PR


def split_generator(H) -> np.ndarray:
    """Real 2N x 2N matrix A with d/dt (a1, b1, a2, b2, ...) = A (a, b).

    Block (k, l) is (1/hbar) [[Im H_kl, Re H_kl], [-Re H_kl, Im H_kl]], from
    i hbar d gamma/dt = H gamma with gamma = a + i b.
    """
    H = np.asarray(quantum._H_matrix(H), dtype=complex)
    n = H.shape[0]
    A = np.zeros((2 * n, 2 * n))
    HR, HI = H.real / HBAR, H.imag / HBAR
    A[0::2, 0::2] = HI
    A[0::2, 1::2] = HR
    A[1::2, 0::2] = -HR
    A[1::2, 1::2] = HI
    return A


def synthesize_S(H, psi, eps: float = EPS, t: float | None = None) -> np.ndarray:
    """S-hat with dP/dt = (2/hbar) S-hat P for the encoded vector P = x^2.

    S-hat = hbar D A D^-1 with D = diag(x), x = (a1, b1, ...). ``psi`` may be a
    stack of states (..., N). Raises SingularityError when a component used
    as a divisor falls below eps.
    """
    A = split_generator(H)
    x = _split(psi)
    used = np.any(A != 0, axis=0)          # columns that need 1/x_l
    xs = np.atleast_2d(x)
    small = (np.abs(xs) < eps) & used
    if small.any():
        row, col = np.argwhere(small)[0]
        k, part = divmod(int(col), 2)
        when = "" if t is None else f" at t = {np.atleast_1d(t)[row]:.6g}"
        raise SingularityError(
            f"encoding singular{when}: {'sin' if part else 'cos'} part of component {k + 1} "
            f"is {xs[row, col]:.3e}", time=None if t is None else float(np.atleast_1d(t)[row]),
            component=k)
    safe = np.where(used, x, 1.0)
    return HBAR * x[..., :, None] * A / safe[..., None, :]


def _split(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    x = np.empty(psi.shape[:-1] + (2 * psi.shape[-1],))
    x[..., 0::2] = psi.real
    x[..., 1::2] = psi.imag
    return x


def check_crossings(H, t, psi_traj) -> None:
    """Raise SingularityError at the first sign change of a used (a_k, b_k) component.

    A sampled trajectory can step over a zero without any sample landing
    within eps of it; a sign change between neighbours is the same event.
    """
    used = np.any(split_generator(H) != 0, axis=0)
    x = _split(psi_traj)
    flips = (np.sign(x[:-1]) * np.sign(x[1:]) < 0) & used
    if flips.any():
        rows, cols = np.nonzero(flips)
        first = np.argmin(rows)
        row, col = int(rows[first]), int(cols[first])
        t = np.asarray(t, dtype=float)
        x0, x1 = x[row, col], x[row + 1, col]
        tc = t[row] + (t[row + 1] - t[row]) * x0 / (x0 - x1)
        k, part = divmod(col, 2)
        raise SingularityError(
            f"encoding singular near t = {tc:.6g}: {'sin' if part else 'cos'} part of "
            f"component {k + 1} changes sign", time=float(tc), component=k)


@dataclass(frozen=True)
class TwoRouteResult:
    t: np.ndarray            # (n,)
    P_fsm: np.ndarray        # (n, 2N) classical route
    P_quantum: np.ndarray    # (n, 2N) encoded quantum route
    theta_dot: np.ndarray    # (n, N) phase velocities, centered differences

    @property
    def max_deviation(self) -> float:
        return float(np.abs(self.P_fsm - self.P_quantum).max())


def phase_velocities(t, psi_traj) -> np.ndarray:
    """dTheta/dt by centered differences on unwrapped phases (one-sided at ends)."""
    theta = quantum.unwrapped_phases(psi_traj)
    return np.gradient(theta, np.asarray(t, dtype=float), axis=0)


def quantum_to_fsm(H, psi0, t1: float, dt: float, t0: float = 0.0,
                   eps: float = EPS, chunk: int = 20000) -> TwoRouteResult:
    """Two-route check for a constant Hamiltonian.

    The quantum route is exact (eigendecomposition). The classical route
    evolves the encoded 2N-vector with P_{n+1} = exp((2/hbar) S-hat(t_{n+1/2}) dt) P_n,
    where S-hat is synthesized from the quantum state at the midpoint.
    """
    Hm = np.asarray(quantum._H_matrix(H), dtype=complex)
    steps = int(round((t1 - t0) / dt))
    if steps < 1:
        raise ValidationError("need t1 > t0 and dt > 0")
    dt = (t1 - t0) / steps
    t = t0 + dt * np.arange(steps + 1)
    half = t0 + dt * (np.arange(steps) + 0.5)
    psi_t = quantum.evolve_exact(Hm, psi0, t - t0)
    P_q = encode_state(psi_t).P
    P_c = np.empty_like(P_q)
    P_c[0] = P_q[0]
    P = P_q[0].copy()
    prev = psi_t[:1]
    for s in range(0, steps, chunk):
        sl = slice(s, min(s + chunk, steps))
        psi_h = quantum.evolve_exact(Hm, psi0, half[sl] - t0)
        check_crossings(Hm, np.r_[t[s], half[sl]], np.vstack([prev, psi_h]))
        prev = psi_h[-1:]
        S_hat = synthesize_S(Hm, psi_h, eps, t=half[sl])
        U = linalg.mat_exp(S_hat * (2.0 / HBAR * dt))
        for j, Uj in enumerate(U):
            P = Uj @ P
            P_c[sl.start + j + 1] = P
    return TwoRouteResult(t, P_c, P_q, phase_velocities(t, psi_t))


def synthesize_trajectory(H, t, psi_traj, eps: float = EPS):
    """S-hat(t) at every sample of a quantum trajectory, plus the encoded trajectory.

    Returns (S_hat of shape (n, 2N, 2N), P of shape (n, 2N)).
    """
    t = np.asarray(t, dtype=float)
    psi = np.asarray(psi_traj, dtype=complex)
    return synthesize_S(H, psi, eps, t=t), encode_state(psi).P


def evolve_on_trajectory(H, t, psi_traj, eps: float = EPS) -> TwoRouteResult:
    """Classical route driven by S-hat sampled on a given quantum trajectory.

    Each step uses the trapezoid average of S-hat at its endpoints, which keeps
    second-order accuracy without needing midpoint states.
    """
    t = np.asarray(t, dtype=float)
    check_crossings(H, t, psi_traj)
    S_hat, P_q = synthesize_trajectory(H, t, psi_traj, eps)
    dts = np.diff(t)
    mids = 0.5 * (S_hat[1:] + S_hat[:-1]) * (2.0 / HBAR * dts)[:, None, None]
    U = linalg.mat_exp(mids)
    P_c = np.empty_like(P_q)
    P_c[0] = P = P_q[0]
    for j, Uj in enumerate(U):
        P = Uj @ P
        P_c[j + 1] = P
    return TwoRouteResult(t, P_c, P_q, phase_velocities(t, psi_traj))


def fsm_route(S_hat_mid, P0, dt: float) -> np.ndarray:
    """Evolve an encoded vector given S-hat at step midpoints, shape (steps, 2N, 2N)."""
    U = linalg.mat_exp(np.asarray(S_hat_mid) * (2.0 / HBAR * dt))
    P = np.asarray(P0, dtype=float)
    out = [P]
    for Uj in U:
        P = Uj @ P
        out.append(P)
    return np.array(out)
