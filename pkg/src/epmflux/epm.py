"""End-point-measurement statistics.

The initial energy is never measured: its label probabilities are Born
probabilities on the undisturbed initial state, while the final energy comes
from one projective measurement after the channel. The joint table therefore
factorizes, ``p(l, k) = p_i[l] * p_f[k]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numkernel as nk
from .dynamics import QuantumChannel
from .errors import DimensionMismatch
from .qstate import DensityMatrix, EnergyBasis, matrix_of

PROB_TOL = 1e-12


def initial_probabilities(op, basis: EnergyBasis) -> np.ndarray:
    """``Tr(A P_l)`` for an arbitrary operator ``A`` (linear in ``A``)."""
    return basis.probabilities(op)


def final_probabilities(op, channel: QuantumChannel, basis: EnergyBasis) -> np.ndarray:
    """``Tr(Phi[A] P_k)`` for an arbitrary operator ``A``."""
    return basis.probabilities(channel.apply_operator(matrix_of(op)))


def _clean(p: np.ndarray) -> np.ndarray:
    if np.any(p < -1e-10):
        raise ValueError(f"negative label probability {p.min():.3e}")
    return np.clip(p, 0.0, None)


@dataclass(frozen=True, eq=False)
class EpmDistribution:
    """Factorized joint table over (initial label, final label).

    Attributes
    ----------
    p_initial, p_final : ndarray
        Marginal label probabilities.
    initial_basis, final_basis : EnergyBasis
        Bases whose labels index the rows and columns.
    state : DensityMatrix or None
        State the table was generated from, kept for downstream decompositions.
    """

    p_initial: np.ndarray
    p_final: np.ndarray
    initial_basis: EnergyBasis
    final_basis: EnergyBasis
    state: Optional[DensityMatrix] = None
    channel: Optional[QuantumChannel] = None

    def __post_init__(self):
        for p in (self.p_initial, self.p_final):
            p.flags.writeable = False

    @property
    def joint(self) -> np.ndarray:
        return np.outer(self.p_initial, self.p_final)

    @property
    def delta_e(self) -> np.ndarray:
        return self.final_basis.energies[None, :] - self.initial_basis.energies[:, None]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.p_initial), len(self.p_final)

    def entries(self):
        """Rows ``(l, k, delta_E, probability)`` in deterministic label order."""
        de = self.delta_e
        joint = self.joint
        out = []
        for a, lab_i in enumerate(self.initial_basis.labels):
            for b, lab_f in enumerate(self.final_basis.labels):
                out.append((lab_i, lab_f, float(de[a, b]), float(joint[a, b])))
        return out

    def zero_mask(self) -> np.ndarray:
        return self.joint <= 0.0

    def mean_delta_e(self) -> float:
        return float(np.sum(self.joint * self.delta_e))

    def histogram(self, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Distribution over distinct ``delta_E`` values (equal within ``tol`` merged)."""
        de = self.delta_e.ravel()
        p = self.joint.ravel()
        order = np.argsort(de, kind="stable")
        values, probs = [], []
        for j in order:
            if values and abs(de[j] - values[-1]) <= tol:
                probs[-1] += p[j]
            else:
                values.append(de[j])
                probs.append(p[j])
        return np.array(values), np.array(probs)

    def to_csv(self, path) -> None:
        bipartite = self.initial_basis.local is not None
        e_i = self.initial_basis.energies
        e_f = self.final_basis.energies
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["l_A", "l_B", "k_A", "k_B"] if bipartite else ["l", "k"]
            w.writerow(head + ["E_i", "E_f", "delta_E", "p_i", "p_f", "p_joint"])
            for a, lab_i in enumerate(self.initial_basis.labels):
                for b, lab_f in enumerate(self.final_basis.labels):
                    labels = [*lab_i, *lab_f] if bipartite else [lab_i, lab_f]
                    nums = [e_i[a], e_f[b], e_f[b] - e_i[a], self.p_initial[a], self.p_final[b],
                            self.p_initial[a] * self.p_final[b]]
                    w.writerow(labels + [format_float(x) for x in nums])


def format_float(x: float) -> str:
    """Shortest round-trip representation (at most 17 significant digits)."""
    return repr(float(x))


def epm_distribution(rho_i, channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis) -> EpmDistribution:
    """Joint EPM table of ``rho_i`` under ``channel``."""
    rho = rho_i if isinstance(rho_i, DensityMatrix) else DensityMatrix(rho_i)
    d = rho.dim
    if channel.dim != d or basis_i.dim != d or basis_f.dim != d:
        raise DimensionMismatch("state, channel and bases must share one dimension")
    p_i = _clean(initial_probabilities(rho, basis_i))
    p_f = _clean(final_probabilities(rho, channel, basis_f))
    return EpmDistribution(p_i, p_f, basis_i, basis_f, rho, channel)


def characteristic_function(dist: EpmDistribution, u: complex) -> complex:
    """``sum_{l,k} p(l, k) exp(i u delta_E)``."""
    return complex(np.sum(dist.joint * np.exp(1j * u * dist.delta_e)))


def characteristic_function_operator(rho_i, channel: QuantumChannel, h_i, h_f, u: complex) -> complex:
    """Factorized form ``Tr(rho e^{-iuH_i}) Tr(Phi[rho] e^{iuH_f})``."""
    r = matrix_of(rho_i)
    first = np.trace(r @ nk.spectral_exp(h_i, -1j * u))
    second = np.trace(channel.apply_operator(r) @ nk.spectral_exp(h_f, 1j * u))
    return complex(first * second)


def mean_energy_residual(dist: EpmDistribution, rho_i, channel: QuantumChannel, h_i, h_f) -> float:
    """``|<dE>_table - (Tr(H_f Phi[rho]) - Tr(H_i rho))|``."""
    r = matrix_of(rho_i)
    exact = np.trace(matrix_of(h_f) @ channel.apply_operator(r)).real - np.trace(matrix_of(h_i) @ r).real
    return abs(dist.mean_delta_e() - exact)
