"""Classical stochastic finite state machines (epidemic-type rate models).

The state is a vector of (possibly unnormalized) occupation probabilities p
evolving as dp/dt = S p.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    DegenerateSpectrumError,
    DomainError,
    NumericalError,
    SingularRatioError,
    ValidationError,
)

log = logging.getLogger(__name__)


class PositivityWarning(UserWarning):
    """Raised (as a warning) when an evolved probability turns negative."""


# --------------------------------------------------------------------------
# generators

def sis_generator(lam: float, g: float) -> np.ndarray:
    """SIS rate matrix [[-lambda, g], [-g, lambda]]."""
    return np.array([[-lam, g], [-g, lam]], dtype=float)


def sir_generator(b: float, gamma: float, state) -> np.ndarray:
    """State-dependent SIR rate matrix acting on (S, I, R).

    Column 1 carries the infection flow -bI/N, +bI/N; column 2 the recovery
    flow -gamma, +gamma. Column sums vanish so the total is conserved.
    """
    s, i, r = (float(x) for x in state)
    total = s + i + r
    if not total > 0:
        raise DomainError("SIR population total must be positive")
    f = b * i / total
    return np.array([[-f, 0.0, 0.0],
                     [f, -gamma, 0.0],
                     [0.0, gamma, 0.0]])


def coupled_generator(sA, sB, s_1A2B: float, s_2A2B: float, s_2A1B: float,
                      s_2A1B_41: float | None = None) -> np.ndarray:
    """4x4 generator of two coupled two-state machines over (p1A, p2A, p1B, p2B).

    Diagonal blocks hold sA and sB. The coupling sits on the anti-diagonal:
    (1,4) = s_1A2B, (2,3) = s_2A2B, (3,2) = s_2A1B and (4,1) = s_2A1B. The
    (4,1) entry can be set separately through ``s_2A1B_41``.
    """
    sA = np.asarray(sA, dtype=float)
    sB = np.asarray(sB, dtype=float)
    S = np.zeros((4, 4))
    S[:2, :2] = sA
    S[2:, 2:] = sB
    S[0, 3] = s_1A2B
    S[1, 2] = s_2A2B
    S[2, 1] = s_2A1B
    S[3, 0] = s_2A1B if s_2A1B_41 is None else s_2A1B_41
    return S


def symmetric_coupled_eigenvectors(s11, s12, s21, s22, s) -> np.ndarray:
    """Analytic eigenvectors V1..V4 (columns) of the symmetric single-s coupling.

    Valid when s != s21 (V1, V2) and s != -s21 (V3, V4).
    """
    d = s11 - s22
    rm = np.sqrt(4 * (s - s12) * (s - s21) + d ** 2 + 0j)
    rp = np.sqrt(4 * (s + s12) * (s + s21) + d ** 2 + 0j)
    x1 = -(rm - d) / (2 * (s - s21))
    x2 = (rm + d) / (2 * (s - s21))
    x3 = (-rp + d) / (2 * (s + s21))
    x4 = (rp + d) / (2 * (s + s21))
    V = np.array([[x1, -1, -x1, 1],
                  [x2, -1, -x2, 1],
                  [x3, 1, x3, 1],
                  [x4, 1, x4, 1]], dtype=complex).T
    return linalg._maybe_real(V, np.zeros(1))


def tensor_generator(sA, sB) -> np.ndarray:
    """S_A (x) I + I (x) S_B over the product basis (1A1B, 1A2B, 2A1B, 2A2B)."""
    sA = np.asarray(sA, dtype=float)
    sB = np.asarray(sB, dtype=float)
    return np.kron(sA, np.eye(sB.shape[0])) + np.kron(np.eye(sA.shape[0]), sB)


# --------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray   # (n,)
    p: np.ndarray   # (n, N)

    def normalized(self) -> np.ndarray:
        tot = self.p.sum(axis=1, keepdims=True)
        return self.p / tot

    @property
    def final(self) -> np.ndarray:
        return self.p[-1]


def _check_state(p0) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float)
    if p0.ndim != 1:
        raise ValidationError("state must be a 1-D vector")
    if np.any(p0 < 0):
        raise DomainError("probabilities must be nonnegative")
    return p0


def _warn_negative(t, p):
    bad = np.argwhere(p < 0)
    if len(bad):
        k, comp = bad[0]
        msg = f"negative probability p{comp + 1} = {p[k, comp]:.3e} at t = {t[k]:.6g}"
        log.warning(msg)
        warnings.warn(msg, PositivityWarning, stacklevel=3)


def evolve(S, p0, t0: float, t1: float, steps: int) -> Trajectory:
    """Evolve dp/dt = S p on a uniform grid of ``steps`` + 1 samples.

    ``S`` is a constant matrix or a callable t -> matrix. A constant S uses
    the exact one-step propagator repeatedly; a time-dependent S uses the
    midpoint exponential per step.
    """
    p0 = _check_state(p0)
    if t1 < t0:
        from .errors import IntervalError
        raise IntervalError(f"t1={t1} precedes t0={t0}")
    t = np.linspace(t0, t1, steps + 1)
    Us = linalg.propagate(S, t0, t1, steps, return_all=True)
    p = np.real_if_close(Us @ p0)
    p = np.real(p)
    _warn_negative(t, p)
    return Trajectory(t, p)


def evolve_nonlinear(generator, p0, t0: float, t1: float, steps: int) -> Trajectory:
    """RK4 for dp/dt = S(t, p) p with the generator re-evaluated at each stage.

    ``generator(t, p)`` returns the matrix; used for the SIR model.
    """
    p0 = _check_state(p0)
    t = np.linspace(t0, t1, steps + 1)
    p = linalg.rk4(lambda tt, y: np.asarray(generator(tt, y)) @ y, p0, t0, t1, steps)
    _warn_negative(t, p)
    return Trajectory(t, p)


def integrated_generator(S, t0: float, t1: float, samples: int = 201) -> np.ndarray:
    """Entrywise time integral of S over [t0, t1] (Simpson rule for callables)."""
    if not callable(S):
        return np.asarray(S, dtype=float) * (t1 - t0)
    from scipy.integrate import simpson
    ts = np.linspace(t0, t1, samples if samples % 2 else samples + 1)
    vals = np.array([np.asarray(S(t), dtype=float) for t in ts])
    return simpson(vals, x=ts, axis=0)


def _sinhc_terms(delta: np.ndarray):
    """Return (sinh(delta/2)/delta, cosh(delta/2)) with the delta -> 0 limit."""
    delta = np.asarray(delta, dtype=complex)
    small = np.abs(delta) < 1e-6
    safe = np.where(small, 1.0, delta)
    shc = np.where(small, 0.5 + delta ** 2 / 48.0, np.sinh(safe / 2) / safe)
    ch = np.cosh(delta / 2)
    return shc, ch


def closed_form_propagator(Sint) -> np.ndarray:
    """Closed-form exp of an integrated 2x2 generator (sinh/cosh form).

    ``Sint`` holds the integrals S_ij(t, t0); leading batch axes allowed.
    The square root Delta may be imaginary (oscillatory case) or zero.
    """
    Sint = np.asarray(Sint)
    S11, S12, S21, S22 = Sint[..., 0, 0], Sint[..., 0, 1], Sint[..., 1, 0], Sint[..., 1, 1]
    delta = np.sqrt((S11 - S22) ** 2 + 4 * S12 * S21 + 0j)
    shc, ch = _sinhc_terms(delta)
    pre = np.exp((S11 + S22) / 2)
    U = np.empty(Sint.shape, dtype=complex)
    U[..., 0, 0] = pre * ((S11 - S22) * shc + ch)
    U[..., 1, 1] = pre * (-(S11 - S22) * shc + ch)
    U[..., 0, 1] = 2 * S12 * pre * shc
    U[..., 1, 0] = 2 * S21 * pre * shc
    if np.isrealobj(Sint):
        return U.real
    return U


def closed_form_evolve(S, p0, t, t0: float = 0.0) -> np.ndarray:
    """p(t) from the closed-form propagator, for constant or callable 2x2 S."""
    p0 = np.asarray(p0, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if callable(S):
        Sint = np.array([integrated_generator(S, t0, tk) for tk in t])
    else:
        Sint = np.asarray(S, dtype=float)[None] * (t - t0)[:, None, None]
    return closed_form_propagator(Sint) @ p0


# --------------------------------------------------------------------------
# eigenmodes

@dataclass(frozen=True)
class ModeDecomposition:
    E: np.ndarray              # (E1, E2), E1 with the minus root
    vectors: np.ndarray        # unit-norm eigenvectors as columns
    closed_form_norms: tuple  # norms n_E1, n_E2 or None where undefined

    def reconstruct(self, weights) -> np.ndarray:
        return self.vectors @ np.asarray(weights)


def eigenmodes(S) -> ModeDecomposition:
    """Eigenvalues and unit eigenvectors of a constant 2x2 generator."""
    S = np.asarray(S, dtype=float)
    if S.shape != (2, 2):
        raise ValidationError("eigenmodes expects a 2x2 generator")
    res = linalg.eig_small(S)
    if res.degenerate:
        raise DegenerateSpectrumError("degenerate spectrum: mode decomposition unavailable")
    return ModeDecomposition(res.values, res.vectors, linalg.closed_form_norms(S))


def eigvec_inner_product(S) -> complex:
    """<psi_E1|psi_E2> of the closed-form eigenvectors with unit second component.

    With v_k = (y_k / (2 s21), 1) this equals 1 - s12/s21, so the pair is
    orthogonal only for s12 = s21.
    """
    S = np.asarray(S, dtype=float)
    s11, s12, s21, s22 = S[0, 0], S[0, 1], S[1, 0], S[1, 1]
    root = np.sqrt((s11 - s22) ** 2 + 4 * s12 * s21 + 0j)
    y1 = -root + s11 - s22
    y2 = root + s11 - s22
    return (y1 / (2 * s21)) * (y2 / (2 * s21)) + 1


def mode_weights(p, modes: ModeDecomposition) -> np.ndarray:
    """Solve p = p_I psi_E1 + p_II psi_E2 for (p_I, p_II)."""
    V = modes.vectors
    if abs(np.linalg.det(V)) < 1e-14:
        raise NumericalError("eigenvector matrix is singular")
    w = np.linalg.solve(V, np.asarray(p, dtype=V.dtype))
    return linalg._maybe_real(w, np.zeros(1))


def projection_weights(p, S) -> np.ndarray:
    """Weights from projections with 1/n_E prefactors, valid for s12 = s21."""
    S = np.asarray(S, dtype=float)
    out = []
    for sign, n in zip((-1, 1), linalg.closed_form_norms(S)):
        if n is None:
            raise NumericalError("closed-form eigenvector prefactor vanishes")
        v = linalg.closed_form_eigenvector(S, sign)
        out.append(np.vdot(v, p) / n)
    return linalg._maybe_real(np.array(out), np.zeros(1))


# --------------------------------------------------------------------------
# ratios

def ratio_trajectory(S, p0, t, t0: float = 0.0) -> np.ndarray:
    """r12(t) = p1(t) / p2(t) from the closed-form propagator."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    p = closed_form_evolve(S, p0, t, t0)
    p2 = p[:, 1]
    sign = np.sign(p2)
    if np.any(p2 == 0) or np.any(sign != sign[0]):
        k = int(np.argmax((p2 == 0) | (sign != sign[0])))
        raise SingularRatioError(f"p2 crosses zero near t = {t[k]:.6g}", time=float(t[k]))
    return p[:, 0] / p2


def ratio_tanh(S, p0, t, t0: float = 0.0) -> np.ndarray:
    """Ratio p1/p2 in tanh form, derived from the closed-form propagator.

    r = [(d p1 + 2 S12 p2) tanh(D/2) + p1 D] / [-(d p2 - 2 S21 p1) tanh(D/2) + p2 D]
    with d = S11 - S22, D = sqrt(d^2 + 4 S12 S21), p = p(t0), S_ij integrated.
    """
    p1, p2 = (float(x) for x in p0)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if callable(S):
        Sint = np.array([integrated_generator(S, t0, tk) for tk in t])
    else:
        Sint = np.asarray(S, dtype=float)[None] * (t - t0)[:, None, None]
    S11, S12, S21, S22 = Sint[:, 0, 0], Sint[:, 0, 1], Sint[:, 1, 0], Sint[:, 1, 1]
    d = S11 - S22
    D = np.sqrt(d ** 2 + 4 * S12 * S21 + 0j)
    small = np.abs(D) < 1e-8
    # tanh(D/2)/D -> 1/2 as D -> 0; divide through by D to stay regular
    safeD = np.where(small, 1.0, D)
    thd = np.where(small, 0.5 - D ** 2 / 24.0, np.tanh(safeD / 2) / safeD)
    num = (d * p1 + 2 * S12 * p2) * thd + p1
    den = -(d * p2 - 2 * S21 * p1) * thd + p2
    return np.real_if_close(num / den)


def modal_ratio(S, p0, t, t0: float = 0.0, norms=(1.0, 1.0)) -> np.ndarray:
    """Mode-weight ratio (p_I/p_II)(t0) * exp((E1/n1 - E2/n2)(t - t0)).

    With unit-norm eigenvectors (the default ``norms``) this is the exact
    ratio of mode weights p_I(t)/p_II(t).
    """
    modes = eigenmodes(S)
    w = mode_weights(p0, modes)
    n1, n2 = norms
    E1, E2 = modes.E
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return (w[0] / w[1]) * np.exp((E1 / n1 - E2 / n2) * (t - t0))


# --------------------------------------------------------------------------
# measurement

def projector(n: int, k: int) -> np.ndarray:
    """P_{->k}: the diagonal projector onto state k (0-based)."""
    P = np.zeros((n, n))
    P[k, k] = 1.0
    return P


def measure_projective(p, outcome: int) -> np.ndarray:
    """Collapse onto basis state ``outcome`` (0-based)."""
    p = _check_state(p)
    if not 0 <= outcome < len(p):
        raise ValidationError(f"outcome {outcome} out of range")
    if p.sum() == 0:
        raise DomainError("cannot measure an all-zero state")
    out = projector(len(p), outcome) @ p
    return out / out.sum()


def sample_outcomes(p, size: int, rng: np.random.Generator | int | None = 42) -> np.ndarray:
    """Draw measurement outcomes with probabilities p_k / sum(p)."""
    p = _check_state(p)
    if p.sum() == 0:
        raise DomainError("cannot measure an all-zero state")
    rng = np.random.default_rng(rng)
    return rng.choice(len(p), size=size, p=p / p.sum())


def measure_weak(p, N: int, N1: int, p_test) -> np.ndarray:
    """Weak measurement on an ensemble: ((N - N1) p + N1 p_test) / N."""
    if N <= 0:
        raise DomainError("N must be positive")
    if not 0 <= N1 <= N:
        raise DomainError(f"need 0 <= N1 <= N, got N1={N1}, N={N}")
    p = np.asarray(p, dtype=float)
    p_test = np.asarray(p_test, dtype=float)
    return ((N - N1) * p + N1 * p_test) / N


def measure_subsystem(p, system: str, outcome: int) -> np.ndarray:
    """Measurement on one machine of the coupled (p1A, p2A, p1B, p2B) layout.

    The measured pair is replaced by the indicator of the outcome and the
    other pair is left untouched.
    """
    p = np.array(p, dtype=float)
    if system not in ("A", "B") or outcome not in (0, 1):
        raise ValidationError("system must be 'A' or 'B' and outcome 0 or 1")
    sl = slice(0, 2) if system == "A" else slice(2, 4)
    block = np.zeros(2)
    block[outcome] = 1.0
    p[sl] = block
    return p


def classical_norm(p) -> float:
    """<psi|psi> = sum p_k^2 for the classical state vector."""
    p = np.asarray(p, dtype=float)
    return float(p @ p)


# --------------------------------------------------------------------------
# time-dependent mode space

def _unit_closed_form_vectors(S, ref=None) -> np.ndarray:
    """Unit eigenvector directions as columns, closed form where it is defined.

    Where the closed form degenerates (e.g. s21 = 0) a null vector of S - E
    is used. With ``ref`` each column's sign is aligned to the reference.
    """
    E = linalg.eig2_closed_form(S)
    vs = []
    for k, sign in enumerate((-1, 1)):
        v = np.array([np.sqrt((S[0, 0] - S[1, 1]) ** 2 + 4 * S[0, 1] * S[1, 0] + 0j) * sign
                      + S[0, 0] - S[1, 1], 2 * S[1, 0]])
        nv = np.linalg.norm(v)
        v = v / nv if nv > 1e-12 else linalg._null_vector_2x2(S, E[k])
        if ref is not None and np.real(np.vdot(ref[:, k], v)) < 0:
            v = -v
        vs.append(v)
    return np.array(vs).T


def berry_terms(S_func, t: float, h: float = 1e-5) -> np.ndarray:
    """Matrix B_ij = <psi_i | d/dt psi_j> of unit eigenvectors, centered differences."""
    V = _unit_closed_form_vectors(np.asarray(S_func(t), dtype=float))
    dV = (_unit_closed_form_vectors(np.asarray(S_func(t + h), dtype=float), V)
          - _unit_closed_form_vectors(np.asarray(S_func(t - h), dtype=float), V)) / (2 * h)
    return linalg._maybe_real(V.conj().T @ dV, np.zeros(1))


def occupancy_residual(S_func, t: float, h: float = 1e-5) -> float:
    """Residual of the constant-occupancy condition at time t.

    <1|d2> <2|d1> - (E1 - <1|d1>)(E2 - <2|d2>); zero when p_I/p_II can stay
    constant. Checker only, no solver.
    """
    S = np.asarray(S_func(t), dtype=float)
    E1, E2 = linalg.eig2_closed_form(S)
    B = berry_terms(S_func, t, h)
    res = B[0, 1] * B[1, 0] - (E1 - B[0, 0]) * (E2 - B[1, 1])
    return complex(res) if abs(np.imag(res)) > 1e-14 else float(np.real(res))


def mode_space_generator(S_func, t: float, e12: float = 0.0, e21: float = 0.0,
                         h: float = 1e-5) -> np.ndarray:
    """G(t) = [[E1 - <1|d1>, e21 - <1|d2>], [e12 - <2|d1>, E2 - <2|d2>]]."""
    S = np.asarray(S_func(t), dtype=float)
    E1, E2 = linalg.eig2_closed_form(S)
    B = berry_terms(S_func, t, h)
    G = np.array([[E1 - B[0, 0], e21 - B[0, 1]],
                  [e12 - B[1, 0], E2 - B[1, 1]]])
    return linalg._maybe_real(G, np.zeros(1))


def mode_space_propagator(S_func, t0: float, t1: float, e12=0.0, e21=0.0,
                          samples: int = 201) -> np.ndarray:
    """G(t1, t0) from the sinh/cosh form applied to the integrals g_ij.

    ``e12`` and ``e21`` are constants or callables of t.
    """
    from scipy.integrate import simpson
    ts = np.linspace(t0, t1, samples if samples % 2 else samples + 1)
    f12 = e12 if callable(e12) else (lambda _t, v=e12: v)
    f21 = e21 if callable(e21) else (lambda _t, v=e21: v)
    G = np.array([mode_space_generator(S_func, t, f12(t), f21(t)) for t in ts])
    g = simpson(G, x=ts, axis=0)
    return closed_form_propagator(g)
