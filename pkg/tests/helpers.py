"""Shared scenario generators for the test suite."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from epmflux import dynamics as dy
from epmflux import qstate as qs
from epmflux.ftheorems import EpmProcess

BETAS = (0.5, 1.0, 2.0)


def gibbs_population_state(h, beta: float, rng: np.random.Generator, strength: float = 0.8) -> qs.DensityMatrix:
    """Random coherences on top of the Gibbs populations of ``h``.

    ``D^1/2 (I + K) D^1/2`` with ``K`` Hermitian, zero-diagonal and
    ``||K|| < 1`` is positive with the populations ``D``.
    """
    basis = qs.EnergyBasis.from_hamiltonian(h)
    gamma, _ = qs.thermal_state(h, beta)
    p = basis.probabilities(gamma.matrix)
    k = qs.random_hermitian(len(p), rng)
    np.fill_diagonal(k, 0.0)
    k *= strength / max(np.linalg.norm(k, 2), 1e-300)
    s = np.sqrt(p)
    m = basis.vectors @ (s[:, None] * (np.eye(len(p)) + k) * s[None, :]) @ basis.vectors.conj().T
    return qs.DensityMatrix(m)


def thermal_marginal_state(h_a, h_b, beta: float, rng: np.random.Generator, strength: float = 0.8) -> qs.DensityMatrix:
    """``gamma_A (x) gamma_B + E`` with ``E`` a random combination of traceless Pauli products."""
    ga, _ = qs.thermal_state(h_a, beta)
    gb, _ = qs.thermal_state(h_b, beta)
    ref = np.kron(ga.matrix, gb.matrix)
    paulis = [qs.SIGMA_X, qs.SIGMA_Y, qs.SIGMA_Z]
    e = sum(rng.normal() * np.kron(p, q) for p in paulis for q in paulis)
    lo = np.linalg.eigvalsh(ref)[0]
    e *= strength * lo / np.linalg.norm(e, 2)
    return qs.DensityMatrix(ref + e, (2, 2))


def random_local_field(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.3, 1.5) * qs.SIGMA_Z + rng.uniform(-0.3, 0.3) * qs.SIGMA_X


@dataclass
class ChannelCase:
    label: str
    kind: str
    schedule: qs.HamiltonianSchedule
    channel: dy.QuantumChannel
    local_i: Optional[tuple] = None
    local_f: Optional[tuple] = None

    def process(self, beta: float) -> EpmProcess:
        if self.local_i is not None:
            return EpmProcess.build(self.channel, None, None, beta, local_i=self.local_i, local_f=self.local_f)
        return EpmProcess.build(self.channel, self.schedule.initial(), self.schedule.final(), beta)


@lru_cache(maxsize=None)
def channel_cases(seed: int = 11) -> tuple:
    """Qubit unitary, qubit Lindblad and switched two-qubit processes with random parameters."""
    rng = np.random.default_rng(seed)
    cases = []
    for j in range(2):
        sched = qs.rotating_xz_schedule(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), 0.0, rng.uniform(1.0, 4.0))
        cases.append(ChannelCase(f"qubit_unitary_{j}", "unitary", sched,
                                 dy.channel_from_propagator(dy.LindbladSpec(sched, ()))))
    jump_sets = [((qs.SIGMA_X, 0.1),), ((qs.SIGMA_MINUS, 0.3), (qs.SIGMA_X, 0.05)), ((qs.SIGMA_Z, 0.2),)]
    for j, jumps in enumerate(jump_sets):
        sched = qs.rotating_xz_schedule(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), 0.0, rng.uniform(1.0, 4.0))
        cases.append(ChannelCase(f"qubit_lindblad_{j}", "lindblad", sched,
                                 dy.channel_from_propagator(dy.LindbladSpec(sched, jumps))))
    for j in range(2):
        h_a, h_b = random_local_field(rng), random_local_field(rng)
        g_a, g_b = random_local_field(rng), random_local_field(rng)
        v = sum(rng.normal() * np.kron(p, q) for p in (qs.SIGMA_X, qs.SIGMA_Y, qs.SIGMA_Z)
                for q in (qs.SIGMA_X, qs.SIGMA_Y, qs.SIGMA_Z))
        t_f = rng.uniform(1.0, 2.5)

        def ramp(h0, h1, t_f=t_f):
            return lambda t: h0 + (t / t_f) * (h1 - h0)

        sched = qs.bipartite_switched_schedule(ramp(h_a, g_a), ramp(h_b, g_b), v, rng.uniform(0.5, 1.5), 0.0, t_f)
        cases.append(ChannelCase(f"bipartite_{j}", "bipartite", sched,
                                 dy.channel_from_propagator(dy.LindbladSpec(sched, ())),
                                 (h_a, h_b), (g_a, g_b)))
    return tuple(cases)


@dataclass
class StateCase:
    label: str
    process: EpmProcess
    rho: qs.DensityMatrix
    rho_tilde: Optional[qs.DensityMatrix]


def randomized_suite(seed: int = 11) -> list[StateCase]:
    """Every channel case at every beta, each with random, Gibbs-population and
    (bipartite) thermal-marginal initial states and two backward states."""
    rng = np.random.default_rng(seed + 1)
    out = []
    for case in channel_cases(seed):
        for beta in BETAS:
            proc = case.process(beta)
            dims = (2, 2) if case.local_i is not None else None
            d = proc.dim
            states = [("random", qs.random_state(d, rng, dims=dims)),
                      ("gibbs_populations", gibbs_population_state(proc.h_i, beta, rng))]
            if dims is not None:
                states[1] = ("gibbs_populations", qs.DensityMatrix(states[1][1].matrix, dims))
                states.append(("thermal_marginals", thermal_marginal_state(*case.local_i, beta, rng)))
            backs = [None, qs.random_state(d, rng, dims=dims)]
            for name, rho in states:
                for b, rho_t in zip(("gibbs", "random"), backs):
                    out.append(StateCase(f"{case.label}/beta={beta}/{name}/back={b}", proc, rho, rho_t))
    return out


def random_entangled_state(rng: np.random.Generator, min_concurrence: float = 0.05) -> qs.DensityMatrix:
    from epmflux.resources import concurrence

    while True:
        rank = int(rng.integers(2, 5))
        rho = qs.random_state(4, rng, rank=rank, dims=(2, 2))
        if concurrence(rho) > min_concurrence:
            return rho
