import warnings

import numpy as np
import pytest
from scipy.integrate import trapezoid

from qsfm import linalg, wannier
from qsfm.errors import ConvergenceError, NearZeroProbabilityError, SingularRatioError, ValidationError


@pytest.fixture(scope="module")
def dw():
    grid = wannier.Grid1D.centered(6.0, 1024)
    V = wannier.double_well(5.0, 2.0, 1.0)
    p1, p2 = wannier.solve_1d_eigen(V, grid, 2)
    return grid, V, p1, p2


def test_grid_validation():
    with pytest.raises(ValidationError):
        wannier.Grid1D(-1, 1, 32)
    with pytest.raises(ValidationError):
        wannier.Grid1D(-1.0, 1.0, 100)     # 0 falls between nodes
    g = wannier.Grid1D.centered(3.0, 128)
    assert g.x[g.i0] == 0 and g.x[0] == -3.0


def test_box_spectrum():
    L = 2.0
    g = wannier.Grid1D.centered(L / 2, 512)
    pairs = wannier.solve_1d_eigen(lambda x: np.zeros_like(x), g, 4)
    for n, p in enumerate(pairs, start=1):
        assert abs(p.E / (n ** 2 * np.pi ** 2 / (2 * L ** 2)) - 1) < 0.01


def test_harmonic_spectrum():
    g = wannier.Grid1D.centered(10.0, 1024)
    pairs = wannier.solve_1d_eigen(lambda x: 0.5 * x ** 2, g, 5)
    for n, p in enumerate(pairs):
        assert abs(p.E / (n + 0.5) - 1) < 0.01


def test_orthonormal_pairs():
    g = wannier.Grid1D.centered(10.0, 512)
    pairs = wannier.solve_1d_eigen(lambda x: 0.5 * x ** 2, g, 6)
    G = np.array([[trapezoid(a.psi * b.psi, dx=g.h) for b in pairs] for a in pairs])
    assert np.abs(G - np.eye(6)).max() < 1e-8


def test_double_well_parity(dw):
    grid, V, p1, p2 = dw
    i0 = grid.i0
    m = min(i0, grid.n_points - 1 - i0)
    left, right = p1.psi[i0 - m:i0][::-1], p1.psi[i0 + 1:i0 + m + 1]
    assert np.abs(left - right).max() < 1e-6
    left, right = p2.psi[i0 - m:i0][::-1], p2.psi[i0 + 1:i0 + m + 1]
    assert np.abs(left + right).max() < 1e-6
    nodes = lambda f: np.sum(np.diff(np.sign(f[np.abs(f) > 1e-8])) != 0)
    assert nodes(p1.psi) == 0 and nodes(p2.psi) == 1


def test_resolution_warning():
    g = wannier.Grid1D.centered(5.0, 64)
    with pytest.warns(wannier.ResolutionWarning):
        wannier.solve_1d_eigen(lambda x: np.zeros_like(x), g, 8)


def test_localization_ratio_cases(dw):
    grid, V, p1, p2 = dw
    x = grid.x
    a = np.where(x < 0, np.exp(-(x + 2) ** 2), 0.0)
    b = np.where(x > 0, np.exp(-(x - 2) ** 2), 0.0)
    assert wannier.localization_ratio(a, b, grid) == 0
    r = wannier.localization_ratio(p1.psi, p2.psi, grid)
    assert abs(r) > 1e6 or np.isinf(r)
    u, v = a + 0.3 * b, 0.2 * a - b
    assert np.isclose(wannier.localization_ratio(u, -v, grid), -wannier.localization_ratio(u, v, grid))


def test_mixing_angle_trivial(dw):
    grid = dw[0]
    x = grid.x
    a = np.where(x < 0, np.exp(-(x + 2) ** 2), 0.0)
    b = np.where(x > 0, np.exp(-(x - 2) ** 2), 0.0)
    g = wannier.mixing_angle(0.0, a, b, grid)
    assert g == 0
    wL, _ = wannier.build_wannier_pair(a, b, g)
    assert np.array_equal(wL, a)
    assert wannier.mixing_angle(np.inf) == pytest.approx(np.pi / 4)


def test_symmetric_wannier_pair(dw):
    grid, V, p1, p2 = dw
    r = wannier.localization_ratio(p1.psi, p2.psi, grid)
    g = wannier.mixing_angle(r, p1.psi, p2.psi, grid)
    assert abs(g - np.pi / 4) < 1e-6
    wL, wR = wannier.build_wannier_pair(p1.psi, p2.psi, g)
    assert np.allclose(wL, (p1.psi + p2.psi) / np.sqrt(2), atol=1e-6)
    assert wannier.left_mass(wL, grid) >= 0.95
    m0 = wannier.left_mass(wL, grid)
    for d in (0.01, -0.01):
        assert wannier.left_mass(wannier.build_wannier_pair(p1.psi, p2.psi, g + d)[0], grid) < m0
    assert wannier.orthonormality_residuals(wL, wR, grid).max() < 1e-8


def test_asymmetric_well_branch_selection():
    grid = wannier.Grid1D.centered(6.0, 1024)
    x = grid.x
    V = wannier.double_well(5.0, 2.0, 1.0)(x) + 0.05 * (x < 0)
    p1, p2 = wannier.solve_1d_eigen(lambda xx: np.interp(xx, x, V), grid, 2)
    r = wannier.localization_ratio(p1.psi, p2.psi, grid)
    g = wannier.mixing_angle(r, p1.psi, p2.psi, grid)
    best = max(wannier.left_mass(wannier.build_wannier_pair(p1.psi, p2.psi, c)[0], grid)
               for c in np.linspace(-np.pi, np.pi, 2001))
    assert wannier.left_mass(wannier.build_wannier_pair(p1.psi, p2.psi, g)[0], grid) >= best - 1e-6


def test_tb_params():
    assert np.allclose(wannier.tb_params(1.0, 2.0, 0.0), np.diag([1.0, 2.0]))
    T = wannier.tb_params(1.0, 2.0, np.inf)
    assert np.allclose(T, [[1.5, 0.5], [0.5, 1.5]])
    T = wannier.tb_params(-0.3, 1.1, 2.7)
    assert np.isclose(np.trace(T), 0.8) and np.isclose(np.linalg.det(T), -0.33)
    assert np.allclose(np.linalg.eigvalsh(T), [-0.3, 1.1], atol=1e-12)


def test_tb_from_angle_agrees():
    for r in (-3.0, -0.2, 0.0, 0.5, 40.0):
        assert np.allclose(wannier.tb_params_from_angle(0.2, 0.9, 0.5 * np.arctan(r)),
                           wannier.tb_params(0.2, 0.9, r), atol=1e-15)


def test_tb_dissipative():
    T = wannier.tb_params_dissipative(1.0, 2.0, 0.7)
    assert np.allclose(T, wannier.tb_params(1.0, 2.0, 0.7))
    T = wannier.tb_params_dissipative(1 - 0.1j, 2 - 0.1j, 0.0)
    assert np.allclose(T, np.diag([1 - 0.1j, 2 - 0.1j]))
    T = wannier.tb_params_dissipative(1 - 0.1j, 2 - 0.1j, 1.3)
    assert not linalg.is_hermitian(T)


def test_wannier_amplitudes_pure_state():
    t = np.linspace(0, 3, 7)
    a = wannier.wannier_amplitudes(0.4, 1.0, 0.0, 1.0, 0.0, t=t, with_ratio=False)
    assert np.allclose(a.alpha, np.exp(-0.4j * t)) and np.allclose(a.beta, 0)
    with pytest.raises(SingularRatioError):
        wannier.wannier_amplitudes(0.4, 1.0, 0.0, 1.0, 0.0, t=t)


def test_wannier_amplitudes_rabi():
    t = np.linspace(0, 20, 101)
    a = wannier.wannier_amplitudes(0.4, 1.0, np.inf, 0.5, 0.5, t=t, with_ratio=False)
    assert np.allclose(np.abs(a.alpha) ** 2, np.cos(0.3 * t) ** 2, atol=1e-12)
    assert np.allclose(np.abs(a.alpha) ** 2 + np.abs(a.beta) ** 2, 1, atol=1e-12)


def test_wannier_ratio_identity():
    t = np.linspace(0, 4, 17)
    a = wannier.wannier_amplitudes(0.3, 1.2, -1.7, 0.35, 0.65, 0.4, 2.1, t)
    assert np.abs(a.ratio - a.alpha / a.beta).max() < 1e-12
    with pytest.raises(ValidationError):
        wannier.wannier_amplitudes(0.3, 1.2, 1.0, 0.5, 0.6)


def test_potential_json():
    V = wannier.potential_from_json({"type": "double_well", "barrier_height": 3,
                                     "well_width": 1, "separation": 2})
    assert np.array_equal(V(np.array([0.0, 1.5, 2.5, -1.5])), [3, 0, 3, 0])
    V = wannier.potential_from_json({"type": "table", "x": [-1, 1], "V": [0, 2]})
    assert V(0.0) == 1
    with pytest.raises(ValidationError):
        wannier.potential_from_json({"type": "lattice"})


# ---------------------------------------------------------------- 2D

def test_transform_identity_and_quarter():
    b = wannier.wannier2d_transform(0, 0)
    assert np.array_equal(b.W, np.eye(4))
    b = wannier.wannier2d_transform(np.pi / 4, np.pi / 4)
    assert np.allclose(np.abs(b.W), 0.5)
    signs = np.array([[1, 1, 1, 1], [-1, 1, -1, 1], [-1, -1, 1, 1], [1, -1, -1, 1]])
    assert np.array_equal(np.sign(b.W), signs)
    assert np.allclose(b.u, [0.5, -0.5, -0.5, 0.5])


def test_transform_inverse_and_u(rng):
    for th in rng.uniform(-np.pi, np.pi, (20, 2)):
        b = wannier.wannier2d_transform(*th)
        assert np.abs(b.W @ b.W_inv - np.eye(4)).max() < 1e-14
        assert abs((b.u ** 2).sum() - 1) < 1e-12
        c1, s1, c2, s2 = np.cos(th[0]), np.sin(th[0]), np.cos(th[1]), np.sin(th[1])
        assert np.allclose(b.u, [c1 * c2, -c1 * s2, -s1 * c2, s1 * s2])


def test_wannier_hamiltonian(rng):
    assert np.allclose(wannier.wannier_hamiltonian([2.0] * 4, 0.3, -0.8), 2 * np.eye(4))
    E = np.array([0.1, 0.5, 0.7, 1.3])
    assert np.allclose(wannier.wannier_hamiltonian(E, 0, 0), np.diag(E))
    for th in rng.uniform(-np.pi, np.pi, (20, 2)):
        Hw = wannier.wannier_hamiltonian(E, *th)
        assert np.abs(Hw - wannier.wannier_hamiltonian_closed_form(E, *th)).max() < 1e-12
        assert np.abs(np.linalg.eigvalsh(Hw) - E).max() < 1e-10


def test_box_overlaps_by_quadrature():
    n = 401
    s = np.linspace(0, 0.5, n)
    X, Y = np.meshgrid(-s, s)          # region I: x < 0, y > 0
    psi = wannier.box_eigenfunctions(X, Y)
    G = np.array([[trapezoid(trapezoid(psi[i] * psi[j], s, axis=1), s) for j in range(4)]
                  for i in range(4)])
    assert np.abs(G - wannier.box_overlaps()).max() < 1e-5


def test_solve_angles_box():
    G = wannier.box_overlaps()
    sols = wannier.solve_angles_2d(G)
    assert abs(sols[0].theta1 - np.pi / 4) < 1e-8 and abs(sols[0].theta2 - np.pi / 4) < 1e-8
    assert np.abs(wannier.stationarity_residuals(G, sols[0].theta1, sols[0].theta2)).max() <= 1e-10
    masses = [s.mass for s in sols]
    assert masses == sorted(masses, reverse=True)


def test_solve_angles_diagonal():
    G = np.diag([0.9, 0.3, 0.2, 0.1])
    sols = wannier.solve_angles_2d(G)
    assert abs(sols[0].theta1) < 1e-12 and abs(sols[0].theta2) < 1e-12


def test_solve_angles_random_residuals(rng):
    for _ in range(10):
        A = rng.normal(size=(4, 4))
        G = A @ A.T / 10
        for s in wannier.solve_angles_2d(G):
            assert np.abs(wannier.stationarity_residuals(G, s.theta1, s.theta2)).max() <= 1e-10


def test_solve_angles_iteration_limit():
    A = np.random.default_rng(0).normal(size=(4, 4))
    with pytest.raises(ConvergenceError) as exc:
        wannier.solve_angles_2d(A @ A.T, max_iter=1)
    assert exc.value.last is not None


def test_dissipative_term():
    assert np.allclose(wannier.dissipative_wannier_term([0.3] * 3, [0.1] * 3, 0.01), 0)
    w, dt = 0.7, 1e-4
    t = np.array([-dt, 0, dt]) + 0.4
    T = wannier.dissipative_wannier_term(w * t, np.zeros(3), dt)
    gen = np.kron(np.array([[0, 1], [-1, 0]]), np.eye(2))
    assert np.abs(T - (-1j * w * gen)).max() < 1e-8
    K = 1j * T                       # dW/dt W^-1
    assert np.abs(K + K.T).max() < 1e-12
    with pytest.raises(ValidationError):
        wannier.dissipative_wannier_term([0, 1], [0, 1], 0.1)


def _exact_wannier_traj(Hw, c0, t):
    w, V = np.linalg.eigh(Hw)
    c = (np.exp(-1j * np.outer(t, w)) * (V.conj().T @ c0)) @ V.T
    return np.abs(c) ** 2, np.unwrap(np.angle(c), axis=0)


def test_fsm_from_wannier_zero():
    t = np.linspace(0, 1, 11)
    eta = np.tile([0.1, 0.2, 0.3, 0.4], (11, 1))
    m = wannier.fsm_from_wannier(np.zeros((4, 4)), t, eta, np.zeros_like(eta))
    assert np.abs(m.M).max() < 1e-12 and np.abs(m.b).max() < 1e-12


def test_fsm_from_wannier_diagonal():
    E = np.array([0.3, -0.2, 0.5, 1.1])
    xi0 = np.array([0.2, 1.0, -0.5, 2.0])
    eta0 = np.array([0.1, 0.2, 0.3, 0.4])
    t = np.linspace(0, 5, 2001)
    eta = np.tile(eta0, (len(t), 1))
    xi = xi0 - np.outer(t, E)
    m = wannier.fsm_from_wannier(np.diag(E), t, eta, xi)
    P = wannier.evolve_wannier_fsm(m)
    assert np.abs(P[:, 0::2] - eta0 * np.cos(xi0 - np.outer(t, E))).max() < 1e-6
    Ps = wannier.evolve_wannier_fsm(m, shifted=True)
    # the affine form dP'/dt = M P' + b tracks the linear one
    assert np.abs((Ps - 1) - P).max() < 1e-9


def test_fsm_from_wannier_general(rng):
    Hw = wannier.wannier_hamiltonian([0.2, 0.5, 0.6, 0.9], 0.4, -0.3)
    c0 = np.array([0.6, 0.5, 0.45, 0.43]) * np.exp(1j * np.array([0.1, 0.7, -0.4, 1.0]))
    c0 /= np.linalg.norm(c0)
    t = np.linspace(0, 3, 3001)
    eta, xi = _exact_wannier_traj(Hw, c0, t)
    m = wannier.fsm_from_wannier(Hw, t, eta, xi)
    P = wannier.evolve_wannier_fsm(m)
    assert np.abs(P - m.P).max() < 1e-6
    assert np.abs(m.P_shifted - 1 - m.P).max() <= 1e-15
    q = wannier.renormalized_probabilities(m.P_shifted)
    assert np.allclose(q.sum(axis=1), 1)


def test_fsm_from_wannier_eta_floor():
    t = np.linspace(0, 1, 5)
    eta = np.tile([0.5, 0.5, 0.0, 0.0], (5, 1))
    with pytest.raises(NearZeroProbabilityError):
        wannier.fsm_from_wannier(np.eye(4), t, eta, np.zeros_like(eta))
