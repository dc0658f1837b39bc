"""Scenario configuration: schema, validation and construction of states and processes.

A scenario is a JSON object. Common states, schedules and jump operators
are referenced by name so configs stay free of raw matrices; explicit
matrices use the ``{"dim", "real", "imag"}`` literal format.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import jsonschema
import numpy as np

from . import qstate as qs
from .dynamics import LindbladSpec, QuantumChannel, channel_from_propagator
from .errors import ConfigError
from .ftheorems import EpmProcess

SCHEMA_VERSION = 1
TASKS = ("decompose", "jarzynski", "crooks", "integral_ft", "cfd_sweep", "efd", "fig2", "fig3")

DEFAULT_TOLERANCES = {
    "identity": 1e-9,
    "row": 1e-9,
    "ift": 1e-9,
    "second_law": 1e-10,
    "mean_energy": 1e-8,
    "reconstruct": 1e-9,
    "bound": 1e-9,
    "endpoint": 1e-10,
    "monotone": 1e-10,
}

FIG_GAMMAS = [round(0.01 * j, 2) for j in range(31)]

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "system", "initial_state", "schedule", "tasks"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "system": {"enum": ["single", "bipartite"]},
        "initial_state": {"type": "object", "required": ["family"]},
        "backward_initial_state": {"type": "object", "required": ["family"]},
        "schedule": {
            "type": "object",
            "required": ["name"],
            "properties": {"name": {"enum": ["static", "rotating_xz", "bipartite_switched"]}},
        },
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "jumps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["op", "kappa"],
                "additionalProperties": False,
                "properties": {"op": {"type": "string"}, "kappa": {"type": "number", "minimum": 0}},
            },
        },
        "steps_per_unit_time": {"type": "integer", "minimum": 1},
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"enum": list(TASKS)},
                    {"type": "object", "required": ["task"], "properties": {"task": {"enum": list(TASKS)}}},
                ]
            },
        },
        "tags": {"type": "array", "items": {"type": "string"}},
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    },
}


def _pauli_operator(spec: dict) -> np.ndarray:
    """``{"z": 0.5}`` or ``{"xx": 1, "yy": 1}``: weighted sum of Pauli strings."""
    mats = []
    for key, coef in spec.items():
        factors = _split_pauli(key)
        m = factors[0]
        for f in factors[1:]:
            m = np.kron(m, f)
        mats.append(coef * m)
    if not mats:
        raise ConfigError("empty operator specification")
    if len({m.shape for m in mats}) != 1:
        raise ConfigError("Pauli strings of different lengths in one operator")
    return sum(mats)


def _split_pauli(key: str) -> list[np.ndarray]:
    names = {"x": "x", "y": "y", "z": "z", "i": "id"}
    try:
        return [qs.PAULI[names[ch]] for ch in key.lower()]
    except KeyError:
        raise ConfigError(f"unknown Pauli string {key!r}") from None


def build_operator(spec) -> np.ndarray:
    if isinstance(spec, dict) and "dim" in spec:
        try:
            return qs.matrix_from_literal(spec)
        except Exception as exc:
            raise ConfigError(f"bad matrix literal: {exc}") from None
    if isinstance(spec, dict):
        return _pauli_operator(spec)
    raise ConfigError(f"cannot build an operator from {spec!r}")


def jump_operator(name: str) -> np.ndarray:
    key = name.lower()
    if key not in ("x", "y", "z", "minus"):
        raise ConfigError(f"unknown jump operator {name!r}; expected x, y, z or minus")
    return qs.PAULI[key]


def build_state(spec: dict, dim: int, dims: Optional[tuple], seed: int) -> qs.DensityMatrix:
    """Build a state from a named family (coherent_qubit, werner, bell, product, random) or a literal."""
    family = spec.get("family")
    try:
        if family == "coherent_qubit":
            a, g = float(spec["a"]), complex(spec.get("gamma", 0.0))
            if not 0.0 <= a <= 1.0 or abs(g) ** 2 > a * (1 - a) + 1e-15:
                raise ConfigError(f"coherent_qubit needs 0 <= a <= 1 and |gamma|^2 <= a(1-a), got a={a}, gamma={g}")
            state = qs.coherent_qubit(a, g)
        elif family == "werner":
            p = float(spec["p"])
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"werner needs 0 <= p <= 1, got {p}")
            state = qs.werner_state(p)
        elif family == "bell":
            state = qs.bell_state(spec.get("which", "phi+"))
        elif family == "product":
            parts = [build_state(s, 2, None, seed + j) for j, s in enumerate(spec["factors"])]
            state = qs.DensityMatrix(np.kron(parts[0].matrix, parts[1].matrix), (parts[0].dim, parts[1].dim))
        elif family == "random":
            rng = np.random.default_rng(int(spec.get("seed", seed)))
            state = qs.random_state(dim, rng, rank=spec.get("rank"), dims=dims)
        elif family == "literal":
            state = qs.DensityMatrix(qs.matrix_from_literal(spec), dims)
        else:
            raise ConfigError(f"unknown state family {family!r}")
    except KeyError as exc:
        raise ConfigError(f"state family {family!r} is missing parameter {exc}") from None
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid {family} state: {exc}") from None
    if state.dim != dim:
        raise ConfigError(f"state dimension {state.dim} does not match the system dimension {dim}")
    if dims is not None and state.dims != dims:
        state = qs.DensityMatrix(state.matrix, dims)
    return state


def build_schedule(spec: dict, system: str) -> qs.HamiltonianSchedule:
    name = spec["name"]
    t_i = float(spec.get("t_i", 0.0))
    try:
        if name == "rotating_xz":
            if system != "single":
                raise ConfigError("rotating_xz is a single-qubit schedule")
            return qs.rotating_xz_schedule(float(spec.get("Omega", 1.0)), float(spec.get("omega", 1.0)),
                                           t_i, float(spec.get("t_f", 10.0)))
        if name == "static":
            if system != "single":
                raise ConfigError("use bipartite_switched for two-party systems")
            return qs.static_schedule(build_operator(spec["h"]), t_i, float(spec.get("t_f", 1.0)))
        if name == "bipartite_switched":
            if system != "bipartite":
                raise ConfigError("bipartite_switched needs system 'bipartite'")
            h_a, h_b = build_operator(spec["h_a"]), build_operator(spec["h_b"])
            v = build_operator(spec.get("interaction", {"xx": 1.0, "yy": 1.0}))
            return qs.bipartite_switched_schedule(qs.constant(h_a), qs.constant(h_b), v,
                                                  float(spec.get("strength", 1.0)), t_i, float(spec.get("t_f", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"schedule {name!r} is missing parameter {exc}") from None
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid schedule {name!r}: {exc}") from None
    raise ConfigError(f"unknown schedule {name!r}")


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated configuration with its constructed process."""

    config: dict
    schedule: qs.HamiltonianSchedule
    channel: QuantumChannel
    process: EpmProcess
    rho_i: qs.DensityMatrix
    rho_tilde: Optional[qs.DensityMatrix]
    tolerances: dict

    @property
    def name(self) -> str:
        return self.config["name"]

    @property
    def bipartite(self) -> bool:
        return self.config["system"] == "bipartite"

    @property
    def seed(self) -> int:
        return int(self.config.get("seed", 0))

    @property
    def tags(self) -> tuple:
        return tuple(self.config.get("tags", ()))

    def with_state(self, rho: qs.DensityMatrix) -> "Scenario":
        return Scenario(self.config, self.schedule, self.channel, self.process, rho, self.rho_tilde,
                        self.tolerances)


def validate(config: dict) -> dict:
    """Check structure and parameter domains; returns a deep copy with defaults filled in."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = copy.deepcopy(config)
    cfg.setdefault("beta", 1.0)
    cfg.setdefault("jumps", [])
    cfg.setdefault("seed", 0)
    cfg.setdefault("tags", [])
    tol = dict(DEFAULT_TOLERANCES)
    unknown = set(cfg.get("tolerances", {})) - set(tol)
    if unknown:
        raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")
    tol.update(cfg.get("tolerances", {}))
    cfg["tolerances"] = tol
    for job in cfg["tasks"]:
        name = job if isinstance(job, str) else job["task"]
        if name in ("efd",) and cfg["system"] != "bipartite":
            raise ConfigError(f"task {name!r} needs a bipartite system")
        if name in ("cfd_sweep", "fig2", "fig3") and cfg["system"] != "single":
            raise ConfigError(f"task {name!r} needs a single system")
    for jump in cfg["jumps"]:
        jump_operator(jump["op"])
        if cfg["system"] == "bipartite":
            raise ConfigError("jump operators are only supported for single qubits")
    return cfg


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build(config: dict) -> Scenario:
    cfg = validate(config)
    schedule = build_schedule(cfg["schedule"], cfg["system"])
    jumps = tuple((jump_operator(j["op"]), float(j["kappa"])) for j in cfg["jumps"])
    spec = LindbladSpec(schedule, jumps)
    steps = None
    if "steps_per_unit_time" in cfg:
        steps = int(np.ceil(cfg["steps_per_unit_time"] * (schedule.t_f - schedule.t_i)))
    channel = channel_from_propagator(spec, steps)
    beta = float(cfg["beta"])
    if cfg["system"] == "bipartite":
        h_a, h_b = schedule.local_hamiltonians(schedule.t_i)
        g_a, g_b = schedule.local_hamiltonians(schedule.t_f)
        process = EpmProcess.build(channel, None, None, beta, local_i=(h_a, h_b), local_f=(g_a, g_b))
        dims = schedule.dims
    else:
        process = EpmProcess.build(channel, schedule.initial(), schedule.final(), beta)
        dims = None
    rho = build_state(cfg["initial_state"], channel.dim, dims, cfg["seed"])
    rho_tilde = None
    if "backward_initial_state" in cfg:
        rho_tilde = build_state(cfg["backward_initial_state"], channel.dim, dims, cfg["seed"] + 1)
    return Scenario(cfg, schedule, channel, process, rho, rho_tilde, cfg["tolerances"])


def load(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None


def figure_config(which: str) -> dict:
    """Coherent qubit ``a = 0.9`` under ``H(t) = (Omega/2)(sin wt sigma_x + cos wt sigma_z)``.

    ``fig3`` adds a ``sigma_x`` jump with rate 0.1.
    """
    if which not in ("fig2", "fig3"):
        raise ConfigError(f"unknown figure {which!r}")
    return {
        "schema_version": SCHEMA_VERSION,
        "name": which,
        "system": "single",
        "initial_state": {"family": "coherent_qubit", "a": 0.9, "gamma": 0.0},
        "schedule": {"name": "rotating_xz", "Omega": 1.0, "omega": 1.0, "t_i": 0.0, "t_f": 10.0},
        "beta": 1.0,
        "jumps": [{"op": "x", "kappa": 0.1}] if which == "fig3" else [],
        "tasks": [{"task": which, "gamma": FIG_GAMMAS}],
        "seed": 0,
    }


def set_parameter(config: dict, name: str, value) -> dict:
    """Return a copy with ``name`` replaced; dotted paths or a bare key searched in
    the top level, ``initial_state`` and ``schedule`` (in that order). Top-level
    keys with defaults, such as ``beta``, may be set even when absent."""
    cfg = copy.deepcopy(config)
    if "." in name:
        *path, leaf = name.split(".")
        node = cfg
        for key in path:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"parameter path {name!r} does not resolve")
            node = node[key]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"parameter path {name!r} does not resolve")
        node[leaf] = value
        return cfg
    for node in (cfg, cfg.get("initial_state", {}), cfg.get("schedule", {})):
        if name in node and not isinstance(node[name], (dict, list)):
            node[name] = value
            return cfg
    if name in CONFIG_SCHEMA["properties"] and name not in ("initial_state", "schedule", "tasks"):
        cfg[name] = value  # top-level key left at its default
        return cfg
    raise ConfigError(f"parameter {name!r} not found in the scenario")
