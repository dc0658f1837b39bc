import numpy as np
import pytest

from epmflux import dynamics as dy
from epmflux import qstate as qs
from epmflux.errors import DecompositionInapplicable, SingularFixedPoint
from epmflux.ftheorems import (EpmProcess, applicable_forms, applicable_table_modes, entropy_table, integral_ft_check,
                               jarzynski_lhs, jarzynski_operator_form, jarzynski_rhs)

import helpers


@pytest.fixture
def qubit_process():
    sched = qs.rotating_xz_schedule(1.0, 1.0, 0.0, 4.0)
    ch = dy.channel_from_propagator(dy.LindbladSpec(sched, ((qs.SIGMA_X, 0.1),)))
    return EpmProcess.build(ch, sched.initial(), sched.final(), 1.0)


def test_lhs_matches_operator_form(qubit_process, rng):
    p = qubit_process
    for _ in range(5):
        rho = qs.random_state(2, rng)
        lhs = jarzynski_lhs(p.forward(rho), p.beta, p.delta_f)
        np.testing.assert_allclose(lhs, jarzynski_operator_form(rho, p.channel, p.gamma_i, p.gamma_f), rtol=1e-12)


def test_gibbs_input_factorizes(rng):
    h_i = qs.random_hermitian(3, rng)
    u = qs.random_unitary(3, rng)
    p = EpmProcess.build(dy.unitary_channel(u), h_i, qs.random_hermitian(3, rng), 0.8)
    expected = 3 * np.real(np.trace(p.channel(p.gamma_i).matrix @ p.gamma_f.matrix))
    np.testing.assert_allclose(jarzynski_lhs(p.forward(p.gamma_i), p.beta, p.delta_f), expected, rtol=1e-12)


@pytest.mark.parametrize("beta", helpers.BETAS)
def test_forms_agree(qubit_process, rng, beta):
    p = EpmProcess.build(qubit_process.channel, qubit_process.h_i, qubit_process.h_f, beta)
    rho = helpers.gibbs_population_state(p.h_i, beta, rng)
    forms = applicable_forms(p, rho)
    assert "coherence_operator" in forms
    for form in forms:
        rep = jarzynski_rhs(form, p, rho)
        assert rep.passed, (form, rep.deviation)


def test_coherence_operator_needs_gibbs_populations(qubit_process, rng):
    rho = qs.DensityMatrix(np.diag([0.9, 0.1]))
    assert "coherence_operator" not in applicable_forms(qubit_process, rho)
    with pytest.raises(DecompositionInapplicable):
        jarzynski_rhs("coherence_operator", qubit_process, rho)


def test_table_modes_check_backward_state(qubit_process, rng):
    p = qubit_process
    rho = helpers.gibbs_population_state(p.h_i, p.beta, rng)
    assert "single_coherence_operator" in applicable_table_modes(p, rho)
    assert applicable_table_modes(p, rho, qs.random_state(2, rng)) == ["single_triple"]


@pytest.mark.parametrize("mode", ["single_triple", "single_coherence_operator"])
def test_entropy_table_rows(qubit_process, rng, mode):
    p = qubit_process
    rho = helpers.gibbs_population_state(p.h_i, p.beta, rng)
    table = entropy_table(p.forward(rho), p.backward(), mode, p)
    assert table.max_residual() < 1e-12
    assert len(table.rows()) == 4
    res = integral_ft_check(table, p.forward(rho))
    assert res["full_support"] and res["ift_passed"] and res["second_law_passed"]


def test_bipartite_modes(rng):
    case = [c for c in helpers.channel_cases() if c.kind == "bipartite"][0]
    p = case.process(1.0)
    rho = helpers.thermal_marginal_state(*p.local_i, 1.0, rng)
    rho_t = helpers.thermal_marginal_state(*p.local_f, 1.0, rng)
    modes = applicable_table_modes(p, rho, rho_t)
    assert modes == ["bipartite_bsa", "bipartite_correlation"]
    for mode in modes:
        table = entropy_table(p.forward(rho), p.backward(rho_t), mode, p)
        assert table.max_residual() < 1e-11
        assert integral_ft_check(table)["ift_passed"]


def test_unknown_mode(qubit_process):
    with pytest.raises(ValueError):
        entropy_table(qubit_process.forward(qubit_process.gamma_i), qubit_process.backward(), "nope", qubit_process)


def test_singular_fixed_point_keeps_forward_tasks():
    h = 0.5 * qs.SIGMA_Z
    p = EpmProcess.build(dy.amplitude_damping_channel(0.5), h, h, 1.0)
    assert isinstance(p.dual_error, SingularFixedPoint)
    rho = qs.coherent_qubit(0.6, 0.2)
    assert jarzynski_rhs("athermality", p, rho).passed
    with pytest.raises(SingularFixedPoint):
        p.backward()
