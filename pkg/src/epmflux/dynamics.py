"""Quantum channels from unitary or Lindblad evolution, their Choi/Kraus forms,
fixed points and time-reversed duals.

Superoperators act on column-stacked matrices: ``vec(|i><j|)`` has index
``j * d + i``, so ``vec(A X B) = (B^T kron A) vec(X)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import numkernel as nk
from .errors import (
    CompletePositivityViolation,
    DimensionMismatch,
    IntegrationUnstable,
    NoUniqueFixedPoint,
    NotAFixedPoint,
    SingularFixedPoint,
)
from .qstate import DensityMatrix, HamiltonianSchedule, matrix_of

STEPS_PER_UNIT_TIME = 2000
CP_TOL = 1e-9
TP_TOL = 1e-9


def vec(m) -> np.ndarray:
    return np.asarray(m, dtype=np.complex128).reshape(-1, order="F")


def unvec(v, d: int) -> np.ndarray:
    return np.asarray(v, dtype=np.complex128).reshape(d, d, order="F")


def superoperator_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k.conj(), k) for k in kraus)


def choi_from_superoperator(s: np.ndarray, d: int) -> np.ndarray:
    """``J = sum_ij |i><j| (x) Phi(|i><j|)``."""
    # column j*d+i of S is vec(Phi(E_ij)); entry [l*d+k, j*d+i] = Phi(E_ij)[k, l]
    t = np.asarray(s).reshape(d, d, d, d)  # indices l, k, j, i
    return t.transpose(3, 1, 2, 0).reshape(d * d, d * d)


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """CPTP map stored as a superoperator, with an optional Kraus set."""

    dim: int
    superoperator: np.ndarray
    kraus: Optional[tuple] = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        s = nk.as_matrix(self.superoperator)
        if s.shape[0] != self.dim * self.dim:
            raise DimensionMismatch(f"superoperator shape {s.shape} does not match dim {self.dim}")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "superoperator", s)
        if self.kraus is not None:
            object.__setattr__(self, "kraus", tuple(np.asarray(k, dtype=np.complex128) for k in self.kraus))
        if self.validate:
            self.check()

    @classmethod
    def from_kraus(cls, kraus: Sequence, validate: bool = True) -> "QuantumChannel":
        ks = [nk.as_matrix(k) for k in kraus]
        return cls(ks[0].shape[0], superoperator_from_kraus(ks), tuple(ks), validate)

    def check(self) -> None:
        """Raise if the map is not trace preserving or not completely positive."""
        d = self.dim
        tp_defect = np.max(np.abs(vec(np.eye(d)).conj() @ self.superoperator - vec(np.eye(d))))
        if tp_defect > TP_TOL:
            raise ValueError(f"channel is not trace preserving (defect {tp_defect:.2e})")
        if self.kraus is not None:
            comp = sum(k.conj().T @ k for k in self.kraus)
            if np.linalg.norm(comp - np.eye(d)) > TP_TOL:
                raise ValueError("Kraus operators are not complete")
        lo = self.choi_min_eigenvalue()
        if lo < -CP_TOL:
            raise CompletePositivityViolation(f"Choi matrix has eigenvalue {lo:.3e}")

    def choi(self) -> np.ndarray:
        return choi_from_superoperator(self.superoperator, self.dim)

    def choi_min_eigenvalue(self) -> float:
        return float(nk.hermitian_eig(self.choi(), check=False).eigenvalues[0])

    def apply_operator(self, m) -> np.ndarray:
        """Action on an arbitrary (not necessarily positive) operator."""
        return unvec(self.superoperator @ vec(matrix_of(m)), self.dim)

    def __call__(self, rho) -> DensityMatrix:
        out = self.apply_operator(rho)
        out = 0.5 * (out + out.conj().T)
        dims = rho.dims if isinstance(rho, DensityMatrix) else None
        return DensityMatrix.from_numerical(out, dims, tol=1e-8)

    def compose(self, other: "QuantumChannel") -> "QuantumChannel":
        """``self o other`` (apply ``other`` first)."""
        return QuantumChannel(self.dim, self.superoperator @ other.superoperator)

    def with_kraus(self) -> "QuantumChannel":
        return self if self.kraus is not None else kraus_from_choi(self)

    def is_unital(self, tol: float = 1e-9) -> bool:
        d = self.dim
        return bool(np.linalg.norm(self.apply_operator(np.eye(d)) - np.eye(d)) < tol)


@dataclass(frozen=True, eq=False)
class LindbladSpec:
    """Schedule plus jump operators ``(L, kappa)`` of a Markovian master equation."""

    schedule: HamiltonianSchedule
    jumps: tuple = ()

    def __post_init__(self):
        jumps = []
        for op, kappa in self.jumps:
            if kappa < 0:
                raise ValueError("jump rates must be non-negative")
            op = nk.as_matrix(op)
            if op.shape[0] != self.schedule.dim:
                raise DimensionMismatch("jump operator dimension does not match the Hamiltonian")
            jumps.append((op, float(kappa)))
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def dim(self) -> int:
        return self.schedule.dim

    def dissipator(self) -> np.ndarray:
        """Superoperator of ``sum kappa (L . L^H - {L^H L, .}/2)``."""
        d = self.dim
        eye = np.eye(d)
        out = np.zeros((d * d, d * d), dtype=np.complex128)
        for op, kappa in self.jumps:
            ldl = op.conj().T @ op
            out += kappa * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye))
        return out


def default_steps(spec: LindbladSpec) -> int:
    return max(1, math.ceil(STEPS_PER_UNIT_TIME * (spec.schedule.t_f - spec.schedule.t_i)))


def _integrate(spec: LindbladSpec, x0: np.ndarray, steps: Optional[int]) -> np.ndarray:
    n_steps = default_steps(spec) if steps is None else int(steps)
    if n_steps < 1:
        raise ValueError("steps must be >= 1")
    sched = spec.schedule
    dt = (sched.t_f - sched.t_i) / n_steps
    out = nk.rk4_propagate(sched.sample(n_steps), spec.dissipator(), x0, dt)
    if not np.all(np.isfinite(out)):
        raise IntegrationUnstable("integration produced non-finite values")
    d = spec.dim
    tr0 = vec(np.eye(d)).conj() @ x0
    tr1 = vec(np.eye(d)).conj() @ out
    drift = np.max(np.abs(tr1 - tr0))
    if drift > 1e-6:
        raise IntegrationUnstable(f"trace drift {drift:.2e}")
    return out


def propagate(spec: LindbladSpec, rho0, steps: Optional[int] = None) -> DensityMatrix:
    """State at ``t_f`` from fixed-step RK4 (default 2000 steps per unit time)."""
    m = matrix_of(rho0)
    out = unvec(_integrate(spec, vec(m)[:, None], steps)[:, 0], spec.dim)
    dims = rho0.dims if isinstance(rho0, DensityMatrix) else None
    return DensityMatrix.from_numerical(0.5 * (out + out.conj().T), dims, tol=1e-8)


def channel_from_propagator(spec: LindbladSpec, steps: Optional[int] = None) -> QuantumChannel:
    """Superoperator whose columns are the propagated matrix units.

    All ``d**2`` units share one time grid, so the result is linear by
    construction.
    """
    d = spec.dim
    s = _integrate(spec, np.eye(d * d, dtype=np.complex128), steps)
    channel = QuantumChannel(d, s, validate=False)
    lo = channel.choi_min_eigenvalue()
    if lo < -CP_TOL:
        raise CompletePositivityViolation(f"Choi matrix has eigenvalue {lo:.3e}")
    channel.check()
    return channel


def kraus_from_choi(channel: QuantumChannel, cutoff: float = 1e-10) -> QuantumChannel:
    """Kraus operators ``sqrt(mu) unvec(v)`` from the Choi eigenpairs with ``mu >= cutoff``."""
    d = channel.dim
    eig = nk.hermitian_eig(channel.choi(), check=False)
    if eig.eigenvalues[0] < -CP_TOL:
        raise CompletePositivityViolation(f"Choi matrix has eigenvalue {eig.eigenvalues[0]:.3e}")
    kraus = []
    for mu, v in zip(eig.eigenvalues[::-1], eig.eigenvectors.T[::-1]):
        if mu < cutoff:
            break
        kraus.append(np.sqrt(mu) * v.reshape(d, d).T)
    return QuantumChannel(d, channel.superoperator, tuple(kraus), validate=False)


def fixed_point(channel: QuantumChannel, require_full_rank: bool = True, cluster_tol: float = 1e-8) -> DensityMatrix:
    """Stationary state of a channel from the null space of ``S - I``.

    Raises
    ------
    NoUniqueFixedPoint
        If the eigenvalue-1 subspace is not one-dimensional.
    SingularFixedPoint
        If ``require_full_rank`` and the fixed point has an eigenvalue below 1e-10.
    """
    d = channel.dim
    _, sv, vh = np.linalg.svd(channel.superoperator - np.eye(d * d))
    null = int(np.sum(sv < cluster_tol))
    if null != 1:
        raise NoUniqueFixedPoint(f"eigenvalue-1 subspace has dimension {null}")
    m = unvec(vh[-1].conj(), d)
    m = m / np.trace(m)
    m = 0.5 * (m + m.conj().T)
    pi = DensityMatrix.from_numerical(m, tol=1e-8)
    if require_full_rank and pi.eigenvalues()[0] < 1e-10:
        raise SingularFixedPoint(f"fixed point has eigenvalue {pi.eigenvalues()[0]:.3e}")
    return pi


def reference_fixed_point(channel: QuantumChannel) -> DensityMatrix:
    """Unique full-rank fixed point, or ``I/d`` for unital maps with a degenerate fixed space."""
    try:
        return fixed_point(channel)
    except NoUniqueFixedPoint:
        if channel.is_unital():
            return DensityMatrix(np.eye(channel.dim) / channel.dim)
        raise


def dual_channel(channel: QuantumChannel, pi) -> QuantumChannel:
    """Time-reversed map with Kraus operators ``pi^(1/2) A^H pi^(-1/2)``."""
    p = matrix_of(pi)
    if nk.hermitian_eig(p).eigenvalues[0] < 1e-10:
        raise SingularFixedPoint("reference state is not full rank")
    if np.linalg.norm(channel.apply_operator(p) - p) > 1e-8:
        raise NotAFixedPoint("reference state is not a fixed point of the channel")
    ch = channel.with_kraus()
    half = nk.matrix_function(p, "sqrt")
    ihalf = nk.matrix_function(p, "inv_sqrt")
    kraus = [half @ k.conj().T @ ihalf for k in ch.kraus]
    dual = QuantumChannel.from_kraus(kraus, validate=False)
    comp = sum(k.conj().T @ k for k in kraus)
    if np.linalg.norm(comp - np.eye(ch.dim)) > 1e-8:
        raise NotAFixedPoint("dual map is not trace preserving")
    return dual


# ---------------------------------------------------------- standard channels


def identity_channel(d: int) -> QuantumChannel:
    return QuantumChannel.from_kraus([np.eye(d)])


def unitary_channel(u) -> QuantumChannel:
    return QuantumChannel.from_kraus([nk.as_matrix(u)])


def hamiltonian_channel(h, duration: float) -> QuantumChannel:
    """``U = exp(-i H duration)`` via the spectral exponential."""
    return unitary_channel(nk.spectral_exp(h, -1j * duration))


def dephasing_channel(p: float, d: int = 2) -> QuantumChannel:
    """Qubit phase flip with probability ``p`` (``d = 2``) or full dephasing mixture for ``d > 2``."""
    if d == 2:
        z = np.diag([1.0, -1.0])
        return QuantumChannel.from_kraus([np.sqrt(1 - p) * np.eye(2), np.sqrt(p) * z])
    ks = [np.sqrt(1 - p) * np.eye(d)] + [np.sqrt(p) * np.diag(np.eye(d)[j]) for j in range(d)]
    return QuantumChannel.from_kraus(ks)


def amplitude_damping_channel(g: float) -> QuantumChannel:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]])
    k1 = np.array([[0, np.sqrt(g)], [0, 0]])
    return QuantumChannel.from_kraus([k0, k1])


def depolarizing_channel(p: float, d: int = 2) -> QuantumChannel:
    """``(1 - p) rho + p Tr(rho) I/d``."""
    s = (1 - p) * np.eye(d * d) + p * np.outer(vec(np.eye(d)), vec(np.eye(d)).conj()) / d
    return QuantumChannel(d, s)


def compose(*channels: QuantumChannel) -> QuantumChannel:
    """Sequential composition; the first argument acts first."""
    out = channels[0]
    for ch in channels[1:]:
        out = ch.compose(out)
    return out
