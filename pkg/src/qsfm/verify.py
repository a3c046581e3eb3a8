"""Invariant suites, one per module, runnable from the CLI or tests.

Each check returns a residual that is compared against its tolerance. The
report is a list of {suite, invariant, status, residual, tolerance}.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bridge, fsm, linalg, quantum, wannier

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    suite: str
    invariant: str
    fn: Callable[[np.random.Generator], float]
    tolerance: float


def _rand_unit(rng, n=4):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def _rand_herm(rng, n=4):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (A + A.conj().T)


# ---------------------------------------------------------------- linalg

def _det_exp(rng):
    worst = 0.0
    for _ in range(20):
        A = rng.normal(size=(4, 4))
        A *= rng.uniform(0.1, 5) / np.abs(A).sum(axis=0).max()
        E = linalg.mat_exp(A)
        worst = max(worst, abs(np.linalg.det(E) / np.exp(np.trace(A)) - 1))
    return worst


def _exp_inverse(rng):
    worst = 0.0
    for _ in range(20):
        A = rng.normal(size=(4, 4)) * 2
        worst = max(worst, np.abs(linalg.mat_exp(A) @ linalg.mat_exp(-A) - np.eye(4)).max())
    return worst


def _unitary(rng):
    worst = 0.0
    for _ in range(20):
        U = linalg.mat_exp(-1j * _rand_herm(rng) * 3)
        worst = max(worst, np.abs(U.conj().T @ U - np.eye(4)).max())
    return worst


def _eig_reconstruct(rng):
    worst = 0.0
    for n in range(2, 9):
        A = _rand_herm(rng, n) if n % 2 else np.real(_rand_herm(rng, n))
        res = linalg.eig_small(A)
        R = sum(l * np.outer(v, v.conj()) for l, v in res.pairs())
        worst = max(worst, np.abs(R - A).max())
    return worst


# ---------------------------------------------------------------- fsm

def _classical_norm(rng):
    # returns max(sum p^2) - 1 + margin; negative means strictly below one
    worst = -np.inf
    for _ in range(50):
        p = rng.dirichlet(np.ones(rng.integers(2, 9)))
        worst = max(worst, fsm.classical_norm(p) - 1)
    return max(0.0, worst + 1e-12)


def _inner_product(rng):
    worst = 0.0
    for _ in range(50):
        S = rng.uniform(-1, 1, (2, 2))
        worst = max(worst, abs(fsm.eigvec_inner_product(S) - (1 - S[0, 1] / S[1, 0])))
    S = np.array([[0.3, 0.7], [0.7, -0.2]])
    return max(worst, abs(fsm.eigvec_inner_product(S)))


def _mode_exponentials(rng):
    worst = 0.0
    for _ in range(20):
        S = rng.uniform(-1, 1, (2, 2))
        p0 = rng.uniform(0.1, 1, 2)
        modes = fsm.eigenmodes(S)
        w0 = fsm.mode_weights(p0, modes)
        t = 0.7
        pt = fsm.closed_form_evolve(S, p0, t)[0]
        wt = fsm.mode_weights(pt, modes)
        worst = max(worst, np.abs(wt - w0 * np.exp(modes.E * t)).max())
    return worst


def _sir_conservation(rng):
    b, g = 1.5, 0.4
    p0 = np.array([0.9, 0.1, 0.0])
    tr = fsm.evolve_nonlinear(lambda t, p: fsm.sir_generator(b, g, p), p0, 0, 10, 2000)
    return float(np.abs(tr.p.sum(axis=1) - 1).max())


def _projector_completeness(rng):
    return float(np.abs(fsm.projector(2, 0) + fsm.projector(2, 1) - np.eye(2)).max())


# ---------------------------------------------------------------- quantum

def _traj(rng, steps=1000):
    H = quantum.two_qubit_hamiltonian(rng.uniform(0, 1, 4), rng.uniform(0.1, 0.5),
                                      rng.uniform(0.1, 0.5), 0.6, rng.uniform(0.8, 2, 4))
    psi0 = _rand_unit(rng)
    return H, quantum.evolve_quantum(H, psi0, 0, 10, steps)


def _norm(rng):
    _, tr = _traj(rng)
    return float(np.abs(tr.norm - 1).max())


def _energy(rng):
    H, tr = _traj(rng)
    e = np.einsum("ti,ij,tj->t", tr.psi.conj(), H.H, tr.psi).real
    return float(np.abs(e - e[0]).max())


def _liouville(rng):
    H, tr = _traj(rng, 4000)
    rho = np.einsum("ti,tj->tij", tr.psi, tr.psi.conj())
    dt = tr.t[1] - tr.t[0]
    worst = 0.0
    for k in range(1, len(tr.t) - 1, 97):
        d = (rho[k + 1] - rho[k - 1]) / (2 * dt)
        worst = max(worst, np.abs(d - quantum.liouville_rhs(H, rho[k])).max())
    return worst


def _entropy_symmetry(rng):
    worst = 0.0
    for _ in range(50):
        sa, sb = quantum.entanglement_entropies(_rand_unit(rng))
        worst = max(worst, abs(sa - sb))
    return worst


def _dissipative_monotone(rng):
    H = quantum.two_qubit_hamiltonian(rng.uniform(0, 1, 4), 0.3, 0.2, 0.5, [1, 1, 1, 1],
                                      dissipative_im_Ep=-rng.uniform(0.01, 0.1, 4))
    tr = quantum.evolve_quantum(H, _rand_unit(rng), 0, 10, 1000)
    return float(max(0.0, np.diff(tr.norm).max()))


# ---------------------------------------------------------------- bridge

def _probability_consistency(rng):
    psi = _rand_unit(rng)
    p, _ = bridge.decode_probabilities(bridge.encode_state(psi))
    return float(np.abs(p - np.abs(psi) ** 2).max())


def _two_route(rng):
    Ep = np.array([0.5, 0.9, 0.45, 0.85])
    H = quantum.two_qubit_hamiltonian(Ep, 0.3, 0.2, 0.5, [1.0, 1.3, 0.9, 1.6]).H
    w, V = np.linalg.eigh(H)
    psi0 = np.exp(1j * np.pi / 4) * (V[:, 0] + 0.1 * V[:, 1])
    psi0 /= np.linalg.norm(psi0)
    H = H - w[0] * np.eye(4)
    return bridge.quantum_to_fsm(H, psi0, 2 * np.pi / (w[1] - w[0]), 1e-3).max_deviation


def _hc_consistency(rng):
    S = np.array([[-0.5, 0.3], [0.4, -0.2]])
    p0 = np.array([0.6, 0.4])
    tr = fsm.evolve(S, p0, 0, 1, 1000)
    x = np.sqrt(tr.p)
    dt = tr.t[1] - tr.t[0]
    dx = (x[2:] - x[:-2]) / (2 * dt)
    rhs = np.array([bridge.classical_hamiltonian(S, p) @ np.sqrt(p) for p in tr.p[1:-1]])
    return float(np.abs(dx - rhs).max())


def _rho_c_symmetry(rng):
    p = rng.uniform(0.01, 1, 4)
    r = bridge.classical_density(p)
    sv = np.linalg.svd(r, compute_uv=False)
    return float(max(np.abs(r - r.T).max(), np.abs(np.diag(r) - p).max(), sv[1] / sv[0]))


def _s_size(rng):
    S = bridge.synthesize_S(np.diag([0.1, 0.2, 0.3, 0.4]), _rand_unit(rng))
    return float(S.shape != (8, 8))


# ---------------------------------------------------------------- wannier

def _double_well_report():
    grid = wannier.Grid1D.centered(6.0, 1024)
    V = wannier.double_well(5.0, 2.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wannier.ResolutionWarning)
        pairs = wannier.solve_1d_eigen(V, grid, 2)
    return grid, pairs


def _orthonormality(rng):
    grid, (p1, p2) = _double_well_report()
    r = wannier.localization_ratio(p1.psi, p2.psi, grid)
    g = wannier.mixing_angle(r, p1.psi, p2.psi, grid)
    wL, wR = wannier.build_wannier_pair(p1.psi, p2.psi, g)
    return float(wannier.orthonormality_residuals(wL, wR, grid).max())


def _tb_spectrum(rng):
    worst = 0.0
    for _ in range(50):
        E1, E2 = np.sort(rng.uniform(-2, 2, 2))
        r = rng.normal() * 5
        ev = np.linalg.eigvalsh(wannier.tb_params(E1, E2, r))
        worst = max(worst, np.abs(ev - [E1, E2]).max())
    return worst


def _localization_optimal(rng):
    # returns max(mass(g +- h) - mass(g)); <= 0 means a local maximum
    grid, (p1, p2) = _double_well_report()
    r = wannier.localization_ratio(p1.psi, p2.psi, grid)
    g = wannier.mixing_angle(r, p1.psi, p2.psi, grid)
    m = lambda a: wannier.left_mass(wannier.build_wannier_pair(p1.psi, p2.psi, a)[0], grid)
    return max(0.0, max(m(g + 1e-3), m(g - 1e-3)) - m(g))


def _similarity(rng):
    worst = 0.0
    for _ in range(50):
        E = np.sort(rng.uniform(-1, 1, 4))
        th = rng.uniform(-np.pi, np.pi, 2)
        worst = max(worst, np.abs(np.linalg.eigvalsh(wannier.wannier_hamiltonian(E, *th)) - E).max())
    return worst


def _orthogonal_W(rng):
    worst = 0.0
    for _ in range(50):
        W = wannier.wannier2d_transform(*rng.uniform(-np.pi, np.pi, 2)).W
        worst = max(worst, np.abs(W.T @ W - np.eye(4)).max())
    return worst


def _bloch_ratio(rng):
    worst = 0.0
    for _ in range(20):
        E1, E2 = np.sort(rng.uniform(0, 2, 2))
        p1 = rng.uniform(0.05, 0.95)
        t = np.linspace(0, 5, 41)
        a = wannier.wannier_amplitudes(E1, E2, rng.normal(), p1, 1 - p1,
                                       rng.uniform(0, 6), rng.uniform(0, 6), t)
        worst = max(worst, np.abs(a.ratio - a.alpha / a.beta).max())
    return worst


CHECKS: list[Check] = [
    Check("linalg", "det(exp A) = exp(tr A)", _det_exp, 1e-10),
    Check("linalg", "exp(A) exp(-A) = I", _exp_inverse, 1e-10),
    Check("linalg", "exp(-iH t) unitary", _unitary, 1e-10),
    Check("linalg", "eigen reconstruction", _eig_reconstruct, 1e-9),
    Check("fsm", "classical norm below one", _classical_norm, 1e-12),
    Check("fsm", "eigenvector inner product 1 - s12/s21", _inner_product, 1e-10),
    Check("fsm", "mode weights evolve exponentially", _mode_exponentials, 1e-8),
    Check("fsm", "SIR total conserved", _sir_conservation, 1e-8),
    Check("fsm", "projector completeness", _projector_completeness, 0.0),
    Check("quantum", "norm conservation", _norm, 1e-9),
    Check("quantum", "energy conservation", _energy, 1e-9),
    Check("quantum", "Liouville-von Neumann consistency", _liouville, 1e-4),
    Check("quantum", "S_A = S_B for pure states", _entropy_symmetry, 1e-9),
    Check("quantum", "dissipative norm non-increasing", _dissipative_monotone, 0.0),
    Check("bridge", "decode(encode(psi)).p = |psi|^2", _probability_consistency, 1e-14),
    Check("bridge", "two-route equivalence", _two_route, 1e-6),
    Check("bridge", "H_c sqrt(p) = d sqrt(p)/dt", _hc_consistency, 1e-6),
    Check("bridge", "rho_c symmetric, rank one", _rho_c_symmetry, 1e-14),
    Check("bridge", "S-hat is 2N x 2N", _s_size, 0.0),
    Check("wannier", "pair orthonormality", _orthonormality, 1e-8),
    Check("wannier", "tb spectrum preserved", _tb_spectrum, 1e-12),
    Check("wannier", "left mass locally maximal", _localization_optimal, 0.0),
    Check("wannier", "2D similarity spectrum", _similarity, 1e-10),
    Check("wannier", "W orthogonal", _orthogonal_W, 1e-12),
    Check("wannier", "Bloch ratio identity", _bloch_ratio, 1e-12),
]

SUITES = tuple(dict.fromkeys(c.suite for c in CHECKS))


def run_suites(suite: str | None = None, seed: int = 42,
               tolerance_scale: float = 1.0) -> list[dict]:
    """Run all checks (or one suite). ``tolerance_scale`` exists for negative tests."""
    from .errors import ValidationError

    if suite is not None and suite not in SUITES:
        raise ValidationError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    report = []
    for c in CHECKS:
        if suite is not None and c.suite != suite:
            continue
        rng = np.random.default_rng(seed)
        tol = c.tolerance * tolerance_scale
        try:
            res = float(c.fn(rng))
            status = "pass" if res <= tol else "fail"
        except Exception as exc:          # a crashing check is a failed check
            log.error("%s/%s raised %r", c.suite, c.invariant, exc)
            res, status = float("nan"), "error"
        log.info("%s/%s: %s (%.3e <= %.1e)", c.suite, c.invariant, status, res, tol)
        report.append({"suite": c.suite, "invariant": c.invariant, "status": status,
                       "residual": res, "tolerance": tol})
    return report


def all_passed(report: list[dict]) -> bool:
    return all(r["status"] == "pass" for r in report)
