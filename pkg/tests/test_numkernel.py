import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from epmflux import numkernel as nk
from epmflux.errors import DimensionMismatch, NonHermitianInput, SingularOperand
from epmflux.qstate import SIGMA_X, SIGMA_Z, random_hermitian


@pytest.mark.parametrize("d", [1, 2, 3, 4, 7, 16])
def test_eig_reconstructs(backend, rng, d):
    a = random_hermitian(d, rng)
    eig = nk.hermitian_eig(a)
    np.testing.assert_allclose(eig.reconstruct(), a, atol=1e-13)
    np.testing.assert_allclose(eig.eigenvectors.conj().T @ eig.eigenvectors, np.eye(d), atol=1e-13)
    np.testing.assert_allclose(eig.eigenvalues, np.linalg.eigvalsh(a), atol=1e-13)
    assert np.all(np.diff(eig.eigenvalues) >= 0)


def test_eig_degenerate(backend):
    a = np.kron(SIGMA_Z, np.eye(2))
    eig = nk.hermitian_eig(a)
    np.testing.assert_allclose(eig.eigenvalues, [-1, -1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(eig.reconstruct(), a, atol=1e-14)


def test_backends_bitwise_deterministic(rng):
    a = random_hermitian(5, rng)
    first = nk.hermitian_eig(a)
    second = nk.hermitian_eig(a)
    np.testing.assert_array_equal(first.eigenvalues, second.eigenvalues)
    np.testing.assert_array_equal(first.eigenvectors, second.eigenvectors)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=2**31 - 1))
def test_eig_property(d, seed):
    a = random_hermitian(d, np.random.default_rng(seed), scale=10.0)
    eig = nk.hermitian_eig(a)
    np.testing.assert_allclose(eig.reconstruct(), a, atol=1e-12 * max(1.0, np.linalg.norm(a)))


def test_eig_rejects_non_hermitian():
    with pytest.raises(NonHermitianInput):
        nk.hermitian_eig(np.array([[0, 1], [0, 0]]))
    with pytest.raises(DimensionMismatch):
        nk.hermitian_eig(np.zeros((2, 3)))


@pytest.mark.parametrize("name,ref", [
    ("exp", scipy.linalg.expm),
    ("log", scipy.linalg.logm),
    ("sqrt", scipy.linalg.sqrtm),
    ("inv", np.linalg.inv),
])
def test_matrix_functions(rng, name, ref):
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    a = g @ g.conj().T + 0.1 * np.eye(3)
    np.testing.assert_allclose(nk.matrix_function(a, name), ref(a), atol=1e-10)


def test_matrix_function_singular():
    with pytest.raises(SingularOperand):
        nk.matrix_function(np.diag([1.0, 0.0]), "inv")


def test_spectral_exp_unitary():
    u = nk.spectral_exp(SIGMA_X, -1j * 0.3)
    np.testing.assert_allclose(u, scipy.linalg.expm(-0.3j * SIGMA_X), atol=1e-14)


def test_partial_trace_and_transpose(rng):
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    m = nk.tensor_product(a, b)
    np.testing.assert_allclose(nk.partial_trace(m, (2, 3), "A"), a * np.trace(b), atol=1e-13)
    np.testing.assert_allclose(nk.partial_trace(m, (2, 3), "B"), b * np.trace(a), atol=1e-13)
    np.testing.assert_allclose(nk.partial_transpose(m, (2, 3), "B"), np.kron(a, b.T), atol=1e-14)
    np.testing.assert_allclose(nk.partial_transpose(m, (2, 3), "A"), np.kron(a.T, b), atol=1e-14)


def test_rk4_matches_exact_unitary(backend):
    h = 0.7 * SIGMA_X + 0.2 * SIGMA_Z
    n, t = 400, 2.0
    grid = np.repeat(h[None], 2 * n + 1, axis=0)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    x0 = rho0.reshape(-1, 1, order="F")
    out = nk.rk4_propagate(grid, np.zeros((4, 4), dtype=complex), x0, t / n)[:, 0].reshape(2, 2, order="F")
    u = scipy.linalg.expm(-1j * h * t)
    np.testing.assert_allclose(out, u @ rho0 @ u.conj().T, atol=1e-10)


def test_backends_agree_on_rk4(rng):
    h = random_hermitian(2, rng)
    grid = np.repeat(h[None], 41, axis=0)
    diss = np.zeros((4, 4), dtype=complex)
    x0 = np.column_stack([np.eye(2, dtype=complex).ravel(order="F") / 2, [1, 0, 0, 0]]).astype(complex)
    results = []
    for name in _available():
        prev = nk.BACKEND
        nk.set_backend(name)
        results.append(nk.rk4_propagate(grid, diss, x0, 0.05))
        nk.set_backend(prev)
    for r in results[1:]:
        np.testing.assert_allclose(r, results[0], atol=1e-14)


def _available():
    try:
        from epmflux.numkernel import _ckernels  # noqa: F401

        return ("python", "cython")
    except ImportError:
        return ("python",)
