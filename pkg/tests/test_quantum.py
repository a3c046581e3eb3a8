import numpy as np
import pytest

from qsfm import quantum
from qsfm.errors import DomainError, InvalidDensityError, ValidationError

from conftest import rand_unit


def test_hamiltonian_site_pattern():
    H = quantum.two_qubit_hamiltonian([0, 0, 0, 0], 1.0, 1.0, 0.0).H
    assert np.array_equal(H.real, [[0, 1, 1, 0], [1, 0, 0, 1], [1, 0, 0, 1], [0, 1, 1, 0]])
    H = quantum.two_qubit_hamiltonian([1, 2, 3, 4], 0, 0, 1.0, [1, 1, 1, 1]).H
    assert np.array_equal(H, np.diag([1 + 3 + 1, 1 + 4 + 1, 2 + 3 + 1, 2 + 4 + 1]))


def test_hamiltonian_coulomb_and_hermitian():
    H = quantum.two_qubit_hamiltonian([0.1, 0.2, 0.3, 0.4], [0.2, 0.1], 0.3, 2.0, [1, 2, 4, 8])
    assert H.is_hermitian()
    assert np.allclose(np.diag(H.H).real, [0.4 + 4, 0.5 + 2, 0.5 + 1, 0.6 + 0.5])
    assert H.H[0, 3] == 0 and H.H[1, 2] == 0
    assert H.H[0, 2] == 0.2 + 0.1j and H.H[2, 0] == 0.2 - 0.1j
    with pytest.raises(DomainError):
        quantum.two_qubit_hamiltonian([0] * 4, 1, 1, 1, [1, 0, 1, 1])


def test_hamiltonian_from_json():
    H = quantum.hamiltonian_from_json({"E_p": [0, 0, 0, 0], "t_s": {"1A2A": [1, 0], "1B2B": [0.5, 0]}})
    assert H.H[0, 2] == 1 and H.H[0, 1] == 0.5
    with pytest.raises(ValidationError):
        quantum.hamiltonian_from_json({"E_p": [0, 0, 0, 0]})


def test_evolve_trivial_cases():
    psi0 = np.array([0.5, 0.5, 0.5, 0.5], dtype=complex)
    tr = quantum.evolve_quantum(np.zeros((4, 4)), psi0, 0, 3, 10)
    assert np.allclose(tr.psi, psi0)
    E = np.array([0.1, -0.4, 1.0, 2.0])
    tr = quantum.evolve_quantum(np.diag(E), psi0, 0, 3, 10)
    assert np.allclose(tr.psi[-1], psi0 * np.exp(-1j * E * 3), atol=1e-14)


def test_rabi_two_level():
    D = 0.7
    tr = quantum.evolve_quantum(np.array([[0, D], [D, 0]]), [1, 0], 0, 5, 200)
    assert np.allclose(tr.p[:, 0], np.cos(D * tr.t) ** 2, atol=1e-12)


def test_norm_over_many_steps(rng):
    H = quantum.two_qubit_hamiltonian(rng.uniform(0, 1, 4), 0.3, 0.4, 0.5, [1, 1.2, 1.5, 2])
    tr = quantum.evolve_quantum(H, rand_unit(rng), 0, 100, 10_000)
    assert np.abs(tr.norm - 1).max() < 1e-9


def test_time_dependent_matches_exact_when_constant(rng):
    H = quantum.two_qubit_hamiltonian(rng.uniform(0, 1, 4), 0.3, 0.4).H
    psi0 = rand_unit(rng)
    tr = quantum.evolve_quantum(lambda t: H, psi0, 0, 2, 40)
    assert np.allclose(tr.psi, quantum.evolve_exact(H, psi0, tr.t), atol=1e-12)


def test_reductions():
    a, b = rand_unit(np.random.default_rng(1), 2), rand_unit(np.random.default_rng(2), 2)
    rho = quantum.density_matrix(np.kron(a, b))
    assert np.allclose(quantum.reduce_A(rho), np.outer(a, a.conj()))
    assert np.allclose(quantum.reduce_B(rho), np.outer(b, b.conj()))
    bell = quantum.density_matrix(np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert np.allclose(quantum.reduce_A(bell), np.eye(2) / 2)
    assert np.allclose(quantum.reduce_B(bell), np.eye(2) / 2)
    with pytest.raises(DomainError):
        quantum.reduce_A(np.zeros((4, 4)))


def test_reduced_trace_and_hermitian(rng):
    for _ in range(10):
        rho = quantum.density_matrix(rand_unit(rng))
        for r in (quantum.reduce_A(rho), quantum.reduce_B(rho)):
            assert abs(np.trace(r) - 1) < 1e-12
            assert np.allclose(r, r.conj().T)


def test_entropy_values():
    assert quantum.von_neumann_entropy(np.diag([1.0, 0.0])) == 0
    assert np.isclose(quantum.von_neumann_entropy(np.eye(2) / 2), np.log(2))
    assert np.isclose(quantum.von_neumann_entropy(np.eye(2) / 2, "bits"), 1.0)
    assert abs(quantum.von_neumann_entropy(np.diag([1 + 5e-11, -5e-11]))) < 1e-10
    with pytest.raises(InvalidDensityError):
        quantum.von_neumann_entropy(np.diag([1.1, -0.1]))


def test_entropy_symmetry_pure(rng):
    for _ in range(20):
        sa, sb = quantum.entanglement_entropies(rand_unit(rng))
        assert abs(sa - sb) < 1e-9


def test_energy_and_liouville(rng):
    H = quantum.two_qubit_hamiltonian(rng.uniform(0, 1, 4), 0.3, 0.4, 0.5).H
    tr = quantum.evolve_quantum(H, rand_unit(rng), 0, 5, 500)
    e = np.einsum("ti,ij,tj->t", tr.psi.conj(), H, tr.psi).real
    assert np.abs(e - e[0]).max() < 1e-9
    # centered differences converge at second order
    errs = []
    for steps in (200, 400):
        tr = quantum.evolve_quantum(H, tr.psi[0], 0, 1, steps)
        dt = tr.t[1] - tr.t[0]
        k = steps // 2
        rho = [quantum.density_matrix(tr.psi[j]) for j in (k - 1, k, k + 1)]
        d = (rho[2] - rho[0]) / (2 * dt)
        errs.append(np.abs(d - quantum.liouville_rhs(H, rho[1])).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_dissipative_norm_decreases(rng):
    H = quantum.two_qubit_hamiltonian([0.1, 0.2, 0.3, 0.4], 0.3, 0.2,
                                      dissipative_im_Ep=[-0.05, -0.01, -0.02, -0.03])
    assert H.dissipative and not H.is_hermitian()
    tr = quantum.evolve_quantum(H, rand_unit(rng), 0, 20, 400)
    assert np.all(np.diff(tr.norm) <= 0)


def test_ab_phases():
    psi = np.array([0.5, 0.5j, -0.5, 0.5], dtype=complex)
    assert np.array_equal(quantum.apply_ab_phases(psi, [0, 0, 0, 0], 1.0), psi)
    th = quantum.apply_ab_phases(np.zeros(4), [0.3, 0, 0, 0], 2.0, 1.5)
    assert np.allclose(th, [0.9, 0.9, 0, 0])
    th = quantum.apply_ab_phases(np.zeros(4), [0, 0, 0, 0.1], 1.0)
    assert np.allclose(th, [0, 0.1, 0, 0.1])
    u = quantum.apply_ab_phases(np.zeros(4), [0.2] * 4, 1.0)
    assert np.allclose(u, 0.4)
    shifted = quantum.apply_ab_phases(psi, [0.3, -0.2, 0.7, 0.1], 1.3)
    assert np.abs(np.abs(shifted) ** 2 - np.abs(psi) ** 2).max() <= 2 * np.finfo(float).eps


def test_phase_explicit_residual(rng):
    H = quantum.two_qubit_hamiltonian(rng.uniform(0, 1, 4), 0.3, 0.2, 0.4).H
    t = np.linspace(0, 1, 2001)
    psi = quantum.evolve_exact(H, rand_unit(rng), t)
    assert quantum.phase_explicit_residual(H, t, psi).max() < 1e-5
