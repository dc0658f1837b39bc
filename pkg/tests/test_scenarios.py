import numpy as np
import pytest

from epmflux import qstate as qs
from epmflux import scenarios as sc
from epmflux.errors import ConfigError


def _base(**kw):
    cfg = {"schema_version": 1, "name": "t", "system": "single",
           "initial_state": {"family": "coherent_qubit", "a": 0.8, "gamma": 0.1},
           "schedule": {"name": "static", "h": {"z": 0.5}}, "tasks": ["jarzynski"]}
    cfg.update(kw)
    return cfg


def test_defaults_filled():
    cfg = sc.validate(_base())
    assert cfg["beta"] == 1.0 and cfg["seed"] == 0 and cfg["jumps"] == []
    assert cfg["tolerances"] == sc.DEFAULT_TOLERANCES


@pytest.mark.parametrize("patch", [
    {"schema_version": 2},
    {"system": "triple"},
    {"beta": -1.0},
    {"tasks": ["nonsense"]},
    {"tasks": ["efd"]},
    {"tolerances": {"wiggle": 1e-3}},
    {"jumps": [{"op": "q", "kappa": 0.1}]},
    {"initial_state": {"family": "coherent_qubit", "a": 0.9, "gamma": 0.4}},
    {"initial_state": {"family": "werner", "p": 0.5}},
    {"schedule": {"name": "static", "h": {"zq": 1.0}}},
])
def test_rejects(patch):
    with pytest.raises(ConfigError):
        sc.build(_base(**patch))


def test_bipartite_rejects_jumps_and_cfd():
    base = _base(system="bipartite", initial_state={"family": "werner", "p": 0.5},
                 schedule={"name": "bipartite_switched", "h_a": {"z": 0.5}, "h_b": {"z": 0.5},
                           "interaction": {"xx": 1.0}, "strength": 1.0, "t_f": 1.0})
    sc.build(base)
    with pytest.raises(ConfigError):
        sc.validate(dict(base, jumps=[{"op": "x", "kappa": 0.1}]))
    with pytest.raises(ConfigError):
        sc.validate(dict(base, tasks=["cfd_sweep"]))


def test_operator_literals():
    np.testing.assert_allclose(sc.build_operator({"xx": 1.0, "yy": 1.0}),
                               np.kron(qs.SIGMA_X, qs.SIGMA_X) + np.kron(qs.SIGMA_Y, qs.SIGMA_Y))
    lit = {"dim": 2, "real": [[1, 0], [0, -1]], "imag": [[0, 0], [0, 0]]}
    np.testing.assert_allclose(sc.build_operator(lit), qs.SIGMA_Z)


def test_random_state_is_seeded():
    spec = {"family": "random", "seed": 3}
    a = sc.build_state(spec, 2, None, 0)
    b = sc.build_state(spec, 2, None, 0)
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_set_parameter():
    cfg = _base()
    assert sc.set_parameter(cfg, "beta", 2.0)["beta"] == 2.0
    assert sc.set_parameter(cfg, "a", 0.6)["initial_state"]["a"] == 0.6
    assert sc.set_parameter(cfg, "initial_state.gamma", 0.2)["initial_state"]["gamma"] == 0.2
    assert cfg["initial_state"]["a"] == 0.8
    with pytest.raises(ConfigError):
        sc.set_parameter(cfg, "nope", 1)
    with pytest.raises(ConfigError):
        sc.set_parameter(cfg, "schedule.nope", 1)


def test_config_hash_is_canonical():
    a = {"x": 1, "y": [1, 2]}
    b = {"y": [1, 2], "x": 1}
    assert sc.config_hash(a) == sc.config_hash(b)
    assert sc.config_hash(a) != sc.config_hash({"x": 2, "y": [1, 2]})
