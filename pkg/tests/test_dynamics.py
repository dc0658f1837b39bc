import numpy as np
import pytest
import scipy.linalg

from epmflux import dynamics as dy
from epmflux import qstate as qs
from epmflux.errors import CompletePositivityViolation, NotAFixedPoint, SingularFixedPoint


def test_vec_unvec_roundtrip(rng):
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    np.testing.assert_array_equal(dy.unvec(dy.vec(m), 3), m)
    np.testing.assert_array_equal(dy.vec(m)[:3], m[:, 0])


def test_unitary_channel_action(rng):
    u = qs.random_unitary(3, rng)
    rho = qs.random_state(3, rng)
    ch = dy.unitary_channel(u)
    np.testing.assert_allclose(ch(rho).matrix, u @ rho.matrix @ u.conj().T, atol=1e-14)


def test_choi_and_kraus_roundtrip(rng):
    ch = dy.compose(dy.amplitude_damping_channel(0.3), dy.dephasing_channel(0.2))
    assert ch.choi_min_eigenvalue() > -1e-12
    k = dy.kraus_from_choi(ch)
    assert len(k.kraus) <= 4
    np.testing.assert_allclose(dy.superoperator_from_kraus(k.kraus), ch.superoperator, atol=1e-13)


def test_not_completely_positive():
    transpose = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2))
            e[i, j] = 1
            transpose[:, j * 2 + i] = dy.vec(e.T)
    with pytest.raises(CompletePositivityViolation):
        dy.QuantumChannel(2, transpose)


def test_compose_order():
    a = dy.amplitude_damping_channel(1.0)
    flip = dy.unitary_channel(qs.SIGMA_X)
    rho = qs.DensityMatrix(np.diag([0.0, 1.0]))
    # damping first sends |1> to |0>, then the flip gives |1>
    np.testing.assert_allclose(dy.compose(a, flip)(rho).matrix, np.diag([0.0, 1.0]), atol=1e-15)
    np.testing.assert_allclose(dy.compose(flip, a)(rho).matrix, np.diag([1.0, 0.0]), atol=1e-15)


def test_propagator_matches_exact_unitary():
    h = 0.4 * qs.SIGMA_X + 0.9 * qs.SIGMA_Z
    spec = dy.LindbladSpec(qs.static_schedule(h, 0.0, 2.0), ())
    ch = dy.channel_from_propagator(spec)
    u = scipy.linalg.expm(-2.0j * h)
    np.testing.assert_allclose(ch.superoperator, np.kron(u.conj(), u), atol=1e-10)


def test_lindblad_dephasing_rate():
    kappa, t = 0.3, 1.5
    spec = dy.LindbladSpec(qs.static_schedule(np.zeros((2, 2)), 0.0, t), ((qs.SIGMA_Z, kappa),))
    out = dy.propagate(spec, qs.coherent_qubit(0.5, 0.5))
    np.testing.assert_allclose(out.matrix[0, 1], 0.5 * np.exp(-2 * kappa * t), atol=1e-10)


def test_lindblad_amplitude_damping_population():
    kappa, t = 0.4, 2.0
    spec = dy.LindbladSpec(qs.static_schedule(0.5 * qs.SIGMA_Z, 0.0, t), ((qs.SIGMA_MINUS, kappa),))
    out = dy.propagate(spec, qs.DensityMatrix(np.diag([0.0, 1.0])))
    np.testing.assert_allclose(out.matrix[1, 1].real, np.exp(-kappa * t), atol=1e-10)


def test_channel_matches_propagation(rng):
    sched = qs.rotating_xz_schedule(1.0, 1.0, 0.0, 3.0)
    spec = dy.LindbladSpec(sched, ((qs.SIGMA_X, 0.1),))
    rho = qs.random_state(2, rng)
    np.testing.assert_allclose(dy.channel_from_propagator(spec)(rho).matrix, dy.propagate(spec, rho).matrix,
                               atol=1e-13)


def test_step_convergence():
    sched = qs.rotating_xz_schedule(1.0, 1.0, 0.0, 10.0)
    spec = dy.LindbladSpec(sched, ((qs.SIGMA_X, 0.1),))
    a = dy.channel_from_propagator(spec, 20000)
    b = dy.channel_from_propagator(spec, 40000)
    assert np.max(np.abs(a.superoperator - b.superoperator)) < 1e-12


def test_fixed_point_and_dual(rng):
    ch = dy.compose(dy.amplitude_damping_channel(0.3), dy.unitary_channel(scipy.linalg.expm(-0.4j * qs.SIGMA_X)))
    pi = dy.fixed_point(ch)
    np.testing.assert_allclose(ch(pi).matrix, pi.matrix, atol=1e-12)
    dual = dy.dual_channel(ch, pi)
    dual.check()
    np.testing.assert_allclose(dual(pi).matrix, pi.matrix, atol=1e-12)


def test_dual_requires_fixed_point():
    ch = dy.depolarizing_channel(0.3)
    with pytest.raises(NotAFixedPoint):
        dy.dual_channel(ch, qs.DensityMatrix(np.diag([0.8, 0.2])))


def test_singular_fixed_point():
    with pytest.raises(SingularFixedPoint):
        dy.fixed_point(dy.amplitude_damping_channel(0.5))


def test_unital_reference_fixed_point():
    ch = dy.unitary_channel(qs.SIGMA_X)
    pi = dy.reference_fixed_point(ch)
    np.testing.assert_allclose(pi.matrix, np.eye(2) / 2, atol=1e-14)
