import numpy as np
import pytest
import scipy.linalg

from epmflux import numkernel as nk
from epmflux import qstate as qs
from epmflux.errors import DimensionMismatch, InvalidState, NonHermitianInput, SupportViolation


def test_density_matrix_validation():
    with pytest.raises(InvalidState):
        qs.DensityMatrix(np.diag([0.6, 0.6]))
    with pytest.raises(InvalidState):
        qs.DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(InvalidState):
        qs.DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))
    with pytest.raises(DimensionMismatch):
        qs.DensityMatrix(np.eye(4) / 4, (2, 3))


def test_density_matrix_is_frozen():
    rho = qs.coherent_qubit(0.7, 0.2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_from_numerical_clips_roundoff():
    m = np.diag([1.0 + 1e-13, -1e-13])
    rho = qs.DensityMatrix.from_numerical(m)
    assert rho.eigenvalues()[0] >= 0.0
    assert abs(np.trace(rho.matrix) - 1.0) < 1e-15


@pytest.mark.parametrize("a,g", [(0.9, 0.3), (0.5, 0.5j), (0.2, 0.0)])
def test_coherent_qubit(a, g):
    rho = qs.coherent_qubit(a, g)
    np.testing.assert_allclose(rho.matrix, [[a, g], [np.conj(g), 1 - a]])


def test_coherent_qubit_domain():
    with pytest.raises(InvalidState):
        qs.coherent_qubit(0.9, 0.31)


@pytest.mark.parametrize("which", ["phi+", "phi-", "psi+", "psi-"])
def test_bell_states_pure(which):
    rho = qs.bell_state(which)
    np.testing.assert_allclose(rho.matrix @ rho.matrix, rho.matrix, atol=1e-15)
    reduced = qs.DensityMatrix(nk.partial_trace(rho.matrix, (2, 2), "A"))
    np.testing.assert_allclose(qs.von_neumann_entropy(reduced), np.log(2), atol=1e-12)


def test_thermal_state_matches_expm(rng):
    h = qs.random_hermitian(3, rng)
    beta = 0.7
    gamma, z = qs.thermal_state(h, beta)
    ref = scipy.linalg.expm(-beta * h)
    np.testing.assert_allclose(z, np.trace(ref).real, rtol=1e-12)
    np.testing.assert_allclose(gamma.matrix, ref / np.trace(ref), atol=1e-13)


def test_free_energy_difference():
    h_i, h_f = qs.SIGMA_Z, 2.0 * qs.SIGMA_Z
    _, z_i = qs.thermal_state(h_i, 1.0)
    _, z_f = qs.thermal_state(h_f, 1.0)
    np.testing.assert_allclose(qs.free_energy_difference(z_i, z_f, 1.0),
                               -np.log(2 * np.cosh(2.0)) + np.log(2 * np.cosh(1.0)))


def test_energy_basis_degenerate_block():
    basis = qs.EnergyBasis.from_hamiltonian(np.diag([0.0, 1.0, 1.0]))
    np.testing.assert_allclose(basis.energies, [0.0, 1.0])
    np.testing.assert_array_equal(basis.degeneracies, [1, 2])
    np.testing.assert_allclose(sum(basis.projectors), np.eye(3), atol=1e-14)


def test_product_basis_labels():
    b = qs.EnergyBasis.product(qs.EnergyBasis.from_hamiltonian(qs.SIGMA_Z),
                               qs.EnergyBasis.from_hamiltonian(0.5 * qs.SIGMA_Z))
    assert len(b) == 4
    assert all(isinstance(lab, tuple) and len(lab) == 2 for lab in b.labels)
    np.testing.assert_allclose(b.hamiltonian(), np.kron(qs.SIGMA_Z, np.eye(2)) + np.kron(np.eye(2), 0.5 * qs.SIGMA_Z),
                               atol=1e-14)


def test_dephase_removes_coherence():
    basis = qs.EnergyBasis.from_hamiltonian(qs.SIGMA_Z)
    out = qs.dephase(qs.coherent_qubit(0.7, 0.3), basis)
    np.testing.assert_allclose(out.matrix, np.diag([0.7, 0.3]), atol=1e-15)


def test_relative_entropy():
    rho = qs.DensityMatrix(np.diag([0.7, 0.3]))
    sigma = qs.DensityMatrix(np.diag([0.5, 0.5]))
    np.testing.assert_allclose(qs.relative_entropy(rho, sigma), 0.7 * np.log(1.4) + 0.3 * np.log(0.6))
    assert qs.relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(SupportViolation):
        qs.relative_entropy(rho, qs.DensityMatrix(np.diag([1.0, 0.0])))


def test_relative_entropy_of_coherence():
    basis = qs.EnergyBasis.from_hamiltonian(qs.SIGMA_Z)
    plus = qs.pure_state([1, 1])
    np.testing.assert_allclose(qs.relative_entropy_of_coherence(plus, basis), np.log(2), atol=1e-12)


def test_literal_roundtrip(rng):
    m = qs.random_state(3, rng).matrix
    np.testing.assert_array_equal(qs.matrix_from_literal(qs.matrix_to_literal(m)), m)


def test_schedules():
    s = qs.rotating_xz_schedule(1.0, 1.0, 0.0, 10.0)
    np.testing.assert_allclose(s.initial(), 0.5 * qs.SIGMA_Z)
    np.testing.assert_allclose(s.final(), 0.5 * (np.sin(10.0) * qs.SIGMA_X + np.cos(10.0) * qs.SIGMA_Z))
    assert s.sample(5).shape == (11, 2, 2)
    v = np.kron(qs.SIGMA_X, qs.SIGMA_X)
    b = qs.bipartite_switched_schedule(qs.constant(qs.SIGMA_Z), qs.constant(qs.SIGMA_Z), v, 2.0, 0.0, 1.0)
    np.testing.assert_allclose(b(0.5) - b(0.0), 2.0 * v, atol=1e-14)
    np.testing.assert_allclose(b(1.0), b(0.0), atol=1e-14)
    with pytest.raises(NonHermitianInput):
        qs.static_schedule(np.array([[0, 1], [0, 0]]))


def test_probabilities_complex_basis(rng):
    h = qs.random_hermitian(3, rng)
    basis = qs.EnergyBasis.from_hamiltonian(h)
    rho = qs.random_state(3, rng)
    v = basis.vectors
    np.testing.assert_allclose(basis.probabilities(rho), np.real(np.diag(v.conj().T @ rho.matrix @ v)), atol=1e-14)
