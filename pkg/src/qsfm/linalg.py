"""Small dense matrix kernel: exponentials, small eigenproblems, propagators."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import DimensionError, DomainError, IntervalError, UnsupportedSizeError

# Taylor order for the scaled exponential. With the scaled norm kept <= 1 the
# truncation term is 1/19! ~ 8e-18, below double precision.
TAYLOR_ORDER = 18
_THETA = 1.0
_COEFFS = np.array([1.0 / factorial(k) for k in range(TAYLOR_ORDER + 1)])

DEGENERACY_TOL = 1e-10
PREFACTOR_TOL = 1e-12


def _check_square(A: np.ndarray) -> None:
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"expected square matrix (..., n, n), got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")


def _one_norm(A: np.ndarray) -> np.ndarray:
    return np.abs(A).sum(axis=-2).max(axis=-1)


def _taylor(X: np.ndarray) -> np.ndarray:
    """Degree-18 Taylor polynomial via Paterson-Stockmeyer in X^4 (7 matmuls)."""
    n = X.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=X.dtype), X.shape)
    X2 = X @ X
    X3 = X2 @ X
    X4 = X2 @ X2
    powers = (eye, X, X2, X3)
    c = _COEFFS

    def block(k0: int, width: int) -> np.ndarray:
        out = np.zeros_like(X)
        for j in range(width):
            out = out + c[k0 + j] * powers[j]
        return out

    # 18 = 4*4 + 2 -> top block holds c16, c17, c18
    acc = block(16, 3)
    for k0 in (12, 8, 4, 0):
        acc = acc @ X4 + block(k0, 4)
    return acc


def mat_exp(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with an order-18 Taylor core.

    Accepts a single matrix or a stack of shape (..., n, n). Every matrix in a
    stack is scaled by its own power of two.
    """
    A = np.asarray(A)
    if not np.issubdtype(A.dtype, np.inexact):
        A = A.astype(float)
    _check_square(A)
    single = A.ndim == 2
    X = A.reshape((-1,) + A.shape[-2:])
    norms = _one_norm(X)
    s = np.zeros(len(X), dtype=int)
    big = norms > _THETA
    s[big] = np.ceil(np.log2(norms[big] / _THETA)).astype(int)
    X = X / (2.0 ** s)[:, None, None]
    E = _taylor(X)
    smax = int(s.max()) if len(s) else 0
    for k in range(smax):
        todo = s > k
        E[todo] = E[todo] @ E[todo]
    E = E.reshape(A.shape)
    return E if not single else E.reshape(A.shape[-2:])


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray          # shape (n,)
    vectors: np.ndarray         # columns, unit Euclidean norm
    degenerate: bool

    def pairs(self):
        return [(self.values[k], self.vectors[:, k]) for k in range(len(self.values))]


def eig2_closed_form(S) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues of a 2x2 matrix, E1 with -sqrt and E2 with +sqrt."""
    S = np.asarray(S)
    s11, s12, s21, s22 = S[..., 0, 0], S[..., 0, 1], S[..., 1, 0], S[..., 1, 1]
    root = np.sqrt((s11 - s22) ** 2 + 4 * s12 * s21 + 0j)
    E1 = 0.5 * (-root + s11 + s22)
    E2 = 0.5 * (root + s11 + s22)
    return E1, E2


def closed_form_eigenvector(S, sign: int) -> np.ndarray:
    """Eigenvector in closed 2x2 form, (y, 2 s21) / (2 s21 + y).

    y = sign * sqrt(D) + s11 - s22, sign = -1 for E1 and +1 for E2. The
    prefactor can vanish; callers check it with :func:`closed_form_prefactor`.
    """
    S = np.asarray(S)
    s11, s12, s21, s22 = S[0, 0], S[0, 1], S[1, 0], S[1, 1]
    y = sign * np.sqrt((s11 - s22) ** 2 + 4 * s12 * s21 + 0j) + s11 - s22
    return np.array([y, 2 * s21]) / (2 * s21 + y)


def closed_form_prefactor(S, sign: int) -> complex:
    S = np.asarray(S)
    s11, s12, s21, s22 = S[0, 0], S[0, 1], S[1, 0], S[1, 1]
    y = sign * np.sqrt((s11 - s22) ** 2 + 4 * s12 * s21 + 0j) + s11 - s22
    return 2 * s21 + y


def closed_form_norms(S):
    """Norms n_E1, n_E2 (squared length of the closed-form eigenvectors).

    Returns None for a norm whose prefactor 2 s21 + y is below 1e-12.
    """
    S = np.asarray(S)
    s11, s12, s21, s22 = S[0, 0], S[0, 1], S[1, 0], S[1, 1]
    root = np.sqrt((s11 - s22) ** 2 + 4 * s12 * s21 + 0j)
    out = []
    for sign in (-1, 1):
        y = sign * root + s11 - s22
        pre = 2 * s21 + y
        if abs(pre) <= PREFACTOR_TOL:
            out.append(None)
        else:
            n = 1 - 4 * s21 * y / pre ** 2
            out.append(n.real if abs(n.imag) < 1e-14 else n)
    return tuple(out)


def _null_vector_2x2(S, E) -> np.ndarray:
    a, b = S[0, 0] - E, S[0, 1]
    c, d = S[1, 0], S[1, 1] - E
    # pick the better conditioned row of (S - E I)
    if abs(a) + abs(b) >= abs(c) + abs(d):
        v = np.array([b, -a], dtype=complex)
    else:
        v = np.array([d, -c], dtype=complex)
    nv = np.linalg.norm(v)
    if nv == 0:
        return np.array([1.0, 0.0], dtype=complex)
    return v / nv


def _maybe_real(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if np.isrealobj(ref) and np.all(np.abs(np.imag(x)) <= 1e-14 * max(1.0, np.abs(x).max())):
        return np.real(x)
    return x


def eig_small(A) -> EigenResult:
    """Eigenpairs for 2 <= N <= 8 with unit-norm eigenvectors.

    The 2x2 case uses the closed-form eigenvalues. Hermitian input of any size
    goes through ``numpy.linalg.eigh``; the rest through ``numpy.linalg.eig``.
    """
    A = np.asarray(A)
    _check_square(A)
    n = A.shape[0]
    if A.ndim != 2 or n < 2 or n > 8:
        raise UnsupportedSizeError(f"eig_small supports 2 <= N <= 8, got shape {A.shape}")
    scale = max(np.abs(A).max(), 1e-300)
    if n == 2:
        E1, E2 = eig2_closed_form(A)
        vals = np.array([E1, E2])
        degenerate = abs(E1 - E2) < DEGENERACY_TOL * max(1.0, scale)
        vecs = np.empty((2, 2), dtype=complex)
        if degenerate:
            # any orthonormal basis of the eigenspace if A is scalar, otherwise
            # the single (defective) eigendirection repeated is useless, so use eig
            if np.abs(A - E1 * np.eye(2)).max() <= DEGENERACY_TOL * max(1.0, scale):
                vecs = np.eye(2, dtype=complex)
            else:
                w, V = np.linalg.eig(A)
                vecs = V.astype(complex)
        else:
            for k, E in enumerate(vals):
                vecs[:, k] = _null_vector_2x2(A, E)
        return EigenResult(_maybe_real(vals, A), _maybe_real(vecs, A), bool(degenerate))
    if np.abs(A - A.conj().T).max() <= 1e-12 * scale:
        w, V = np.linalg.eigh(A)
    else:
        w, V = np.linalg.eig(A)
        order = np.lexsort((w.imag, w.real))
        w, V = w[order], V[:, order]
        V = V / np.linalg.norm(V, axis=0)
    gaps = np.abs(np.diff(np.sort_complex(w.astype(complex))))
    degenerate = bool(np.any(gaps < DEGENERACY_TOL * max(1.0, scale)))
    return EigenResult(_maybe_real(w, A), _maybe_real(V, A), degenerate)


def propagate(generator, t0: float, t1: float, steps: int, return_all: bool = False):
    """Time-ordered propagator as a product of midpoint exponentials.

    ``generator`` is a constant matrix or a callable t -> matrix. With
    ``return_all`` the cumulative propagators at every step boundary are
    returned, shape (steps + 1, n, n).
    """
    if t1 < t0:
        raise IntervalError(f"t1={t1} precedes t0={t0}")
    if steps < 1:
        raise DomainError("steps must be >= 1")
    dt = (t1 - t0) / steps
    if callable(generator):
        mids = t0 + (np.arange(steps) + 0.5) * dt
        mats = np.array([np.asarray(generator(t)) for t in mids])
        steps_U = mat_exp(mats * dt)
    else:
        G = np.asarray(generator)
        steps_U = np.broadcast_to(mat_exp(G * dt), (steps,) + G.shape)
    n = steps_U.shape[-1]
    U = np.eye(n, dtype=steps_U.dtype)
    if return_all:
        out = np.empty((steps + 1, n, n), dtype=steps_U.dtype)
        out[0] = U
    for k in range(steps):
        U = steps_U[k] @ U
        if return_all:
            out[k + 1] = U
    return out if return_all else U


def rk4(f, y0, t0: float, t1: float, steps: int, return_all: bool = True):
    """Classical fixed-step 4th-order Runge-Kutta for y' = f(t, y).

    ``y0`` may carry leading batch axes; ``f`` must accept the same shape.
    """
    if t1 < t0:
        raise IntervalError(f"t1={t1} precedes t0={t0}")
    y = np.array(y0, dtype=np.result_type(y0, float))
    h = (t1 - t0) / steps
    if return_all:
        ys = np.empty((steps + 1,) + y.shape, dtype=y.dtype)
        ys[0] = y
    t = t0
    for k in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * h
        if return_all:
            ys[k + 1] = y
    return ys if return_all else y


def is_hermitian(A, tol: float = 1e-12) -> bool:
    A = np.asarray(A)
    scale = max(np.abs(A).max(), 1e-300)
    return bool(np.abs(A - A.conj().T).max() <= tol * scale)
