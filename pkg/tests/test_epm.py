import csv

import numpy as np
import pytest

from epmflux import dynamics as dy
from epmflux import qstate as qs
from epmflux.epm import (characteristic_function, characteristic_function_operator, epm_distribution, format_float,
                         mean_energy_residual)
from epmflux.errors import DimensionMismatch


@pytest.fixture
def setting():
    sched = qs.rotating_xz_schedule(1.0, 1.0, 0.0, 10.0)
    ch = dy.channel_from_propagator(dy.LindbladSpec(sched, ((qs.SIGMA_X, 0.1),)))
    b_i = qs.EnergyBasis.from_hamiltonian(sched.initial())
    b_f = qs.EnergyBasis.from_hamiltonian(sched.final())
    return sched, ch, b_i, b_f


def test_table_factorizes(setting):
    _, ch, b_i, b_f = setting
    rho = qs.coherent_qubit(0.9, 0.25)
    dist = epm_distribution(rho, ch, b_i, b_f)
    np.testing.assert_allclose(dist.joint.sum(), 1.0, atol=1e-15)
    np.testing.assert_allclose(dist.joint.sum(axis=1), dist.p_initial, atol=1e-15)
    np.testing.assert_allclose(dist.joint.sum(axis=0), dist.p_final, atol=1e-15)
    # initial marginal is blind to coherence, the final one is not
    ref = epm_distribution(qs.dephase(rho, b_i), ch, b_i, b_f)
    np.testing.assert_allclose(dist.p_initial, ref.p_initial, atol=1e-15)
    assert np.max(np.abs(dist.p_final - ref.p_final)) > 1e-3


def test_zero_mask_and_histogram():
    b = qs.EnergyBasis.from_hamiltonian(qs.SIGMA_Z)
    dist = epm_distribution(qs.DensityMatrix(np.diag([1.0, 0.0])), dy.identity_channel(2), b, b)
    assert dist.zero_mask().sum() == 3
    values, probs = dist.histogram()
    np.testing.assert_allclose(probs.sum(), 1.0)
    assert 0.0 in values


@pytest.mark.parametrize("u", [0.0, 0.3, -1.7, 2.5 + 0.4j])
def test_characteristic_function(setting, u):
    sched, ch, b_i, b_f = setting
    rho = qs.coherent_qubit(0.7, 0.2 + 0.1j)
    dist = epm_distribution(rho, ch, b_i, b_f)
    np.testing.assert_allclose(characteristic_function(dist, u),
                               characteristic_function_operator(rho, ch, sched.initial(), sched.final(), u),
                               atol=1e-13)


def test_mean_energy_residual(setting, rng):
    sched, ch, b_i, b_f = setting
    for _ in range(5):
        rho = qs.random_state(2, rng)
        dist = epm_distribution(rho, ch, b_i, b_f)
        assert mean_energy_residual(dist, rho, ch, sched.initial(), sched.final()) < 1e-12


def test_dimension_mismatch():
    b2 = qs.EnergyBasis.from_hamiltonian(qs.SIGMA_Z)
    with pytest.raises(DimensionMismatch):
        epm_distribution(qs.werner_state(0.5), dy.identity_channel(2), b2, b2)


@pytest.mark.parametrize("x", [0.1, 1 / 3, 1e-300, 123456789.123, -2.5e-17])
def test_format_float_roundtrip(x):
    s = format_float(x)
    assert float(s) == x
    assert len(s.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17


def test_csv_columns(setting, tmp_path):
    _, ch, b_i, b_f = setting
    dist = epm_distribution(qs.coherent_qubit(0.9, 0.1), ch, b_i, b_f)
    dist.to_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    np.testing.assert_allclose(sum(float(r["p_joint"]) for r in rows), 1.0)
