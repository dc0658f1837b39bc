"""Density matrices, energy bases, Hamiltonian schedules and entropic functionals."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numkernel as nk
from .errors import (
    DimensionMismatch,
    InvalidState,
    NonHermitianInput,
    NonpositivePartitionFunction,
    SupportViolation,
)

STATE_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z, "minus": SIGMA_MINUS, "id": np.eye(2, dtype=np.complex128)}


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=np.complex128)
    m.flags.writeable = False
    return m


def matrix_of(x) -> np.ndarray:
    """Underlying complex array of a DensityMatrix or array-like."""
    if isinstance(x, DensityMatrix):
        return x.matrix
    return nk.as_matrix(x)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Positive, unit-trace Hermitian matrix with an optional bipartite split.

    Construction validates the input with tolerance ``tol`` and never
    repairs it; use :meth:`from_numerical` for outputs of numerical
    pipelines that may carry round-off negativity.
    """

    matrix: np.ndarray
    dims: Optional[tuple[int, int]] = None
    tol: float = field(default=STATE_TOL, repr=False)

    def __post_init__(self):
        m = nk.as_matrix(self.matrix)
        d = m.shape[0]
        if self.dims is not None and self.dims[0] * self.dims[1] != d:
            raise DimensionMismatch(f"dims {self.dims} do not match dimension {d}")
        if np.linalg.norm(m - m.conj().T) > self.tol:
            raise InvalidState("state is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        if abs(np.trace(m).real - 1.0) > self.tol:
            raise InvalidState(f"trace {np.trace(m).real!r} differs from 1")
        lo = nk.hermitian_eig(m, check=False).eigenvalues[0]
        if lo < -self.tol:
            raise InvalidState(f"negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def from_numerical(cls, m, dims=None, tol: float = STATE_TOL) -> "DensityMatrix":
        """Clip eigenvalues in ``[-tol, 0)`` to zero and renormalize, then validate."""
        m = nk.as_matrix(m)
        if np.linalg.norm(m - m.conj().T) > tol * max(1.0, np.linalg.norm(m)):
            raise NonHermitianInput("numerical state is not Hermitian")
        eig = nk.hermitian_eig(0.5 * (m + m.conj().T), check=False)
        w = eig.eigenvalues
        if w[0] < -tol:
            raise InvalidState(f"negative eigenvalue {w[0]:.3e}")
        if w[0] < 0:
            w = np.clip(w, 0.0, None)
            m = (eig.eigenvectors * w) @ eig.eigenvectors.conj().T
        m = m / np.trace(m).real
        return cls(m, dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return nk.hermitian_eig(self.matrix, check=False).eigenvalues

    def expect(self, op) -> float:
        return float(np.real(np.trace(self.matrix @ matrix_of(op))))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, dims={self.dims})"


def as_state(x, dims=None) -> DensityMatrix:
    if isinstance(x, DensityMatrix):
        return x
    return DensityMatrix(x, dims)


def pure_state(vec, dims=None) -> DensityMatrix:
    v = np.asarray(vec, dtype=np.complex128)
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()), dims)


def coherent_qubit(a: float, g: complex) -> DensityMatrix:
    """Qubit ``[[a, g], [g*, 1 - a]]``; requires ``|g|**2 <= a (1 - a)``."""
    if not 0.0 <= a <= 1.0 or abs(g) ** 2 > a * (1 - a) + 1e-15:
        raise InvalidState(f"(a={a}, g={g}) is not a valid qubit state")
    return DensityMatrix(np.array([[a, g], [np.conj(g), 1 - a]], dtype=np.complex128))


def bell_state(which: str = "phi+") -> DensityMatrix:
    s = 1 / np.sqrt(2)
    vecs = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    return pure_state(vecs[which], dims=(2, 2))


def werner_state(p: float) -> DensityMatrix:
    """``p |psi-><psi-| + (1 - p) I / 4``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidState(f"Werner parameter {p} outside [0, 1]")
    m = p * bell_state("psi-").matrix + (1 - p) * np.eye(4) / 4
    return DensityMatrix(m, dims=(2, 2))


def random_state(d: int, rng: np.random.Generator, rank: Optional[int] = None, dims=None) -> DensityMatrix:
    """Hilbert-Schmidt (rank ``d``) or induced (lower rank) random density matrix."""
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real, dims)


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (g + g.conj().T)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# --------------------------------------------------------------------- bases


@dataclass(frozen=True, eq=False)
class EnergyBasis:
    """Spectral decomposition ``H = sum_l E_l P_l`` with degenerate levels merged.

    ``vectors`` holds an orthonormal eigenbasis whose columns are grouped by
    block (``blocks[l]`` lists the column indices of level ``l``). ``labels``
    are integers for single systems and ``(l_A, l_B)`` pairs for product bases.
    """

    energies: np.ndarray
    projectors: tuple
    vectors: np.ndarray
    blocks: tuple
    labels: tuple
    local: Optional[tuple] = None

    @classmethod
    def from_hamiltonian(cls, h, degeneracy_tol: float = 1e-9) -> "EnergyBasis":
        eig = nk.hermitian_eig(h)
        w, v = eig.eigenvalues, eig.eigenvectors
        groups: list[list[int]] = []
        for j, e in enumerate(w):
            if groups and abs(e - w[groups[-1][0]]) <= degeneracy_tol * max(1.0, abs(e)):
                groups[-1].append(j)
            else:
                groups.append([j])
        energies = np.array([w[g].mean() for g in groups])
        projectors = tuple(_frozen(v[:, g] @ v[:, g].conj().T) for g in groups)
        return cls(
            energies=energies,
            projectors=projectors,
            vectors=_frozen(v),
            blocks=tuple(tuple(g) for g in groups),
            labels=tuple(range(len(groups))),
        )

    @classmethod
    def product(cls, basis_a: "EnergyBasis", basis_b: "EnergyBasis") -> "EnergyBasis":
        """Product basis ``P_{l_A} (x) P_{l_B}`` with energies ``E_{l_A} + E_{l_B}``."""
        energies, projectors, labels, blocks = [], [], [], []
        db = basis_b.dim
        vectors = np.kron(basis_a.vectors, basis_b.vectors)
        for la, (ea, pa, ba) in enumerate(zip(basis_a.energies, basis_a.projectors, basis_a.blocks)):
            for lb, (eb, pb, bb) in enumerate(zip(basis_b.energies, basis_b.projectors, basis_b.blocks)):
                energies.append(ea + eb)
                projectors.append(_frozen(np.kron(pa, pb)))
                labels.append((la, lb))
                blocks.append(tuple(i * db + j for i in ba for j in bb))
        return cls(
            energies=np.array(energies),
            projectors=tuple(projectors),
            vectors=_frozen(vectors),
            blocks=tuple(blocks),
            labels=tuple(labels),
            local=(basis_a, basis_b),
        )

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def degeneracies(self) -> np.ndarray:
        return np.array([len(b) for b in self.blocks])

    def __len__(self) -> int:
        return len(self.energies)

    def probabilities(self, op) -> np.ndarray:
        """Real parts of ``Tr(A P_l)`` for every level (linear in ``A``)."""
        m = matrix_of(op)
        if m.shape[0] != self.dim:
            raise DimensionMismatch(f"operator dimension {m.shape[0]} vs basis {self.dim}")
        return np.array([np.real(np.vdot(p, m)) for p in self.projectors])

    def hamiltonian(self) -> np.ndarray:
        return sum(e * p for e, p in zip(self.energies, self.projectors))


def dephase(rho, basis: EnergyBasis) -> DensityMatrix:
    """Block-diagonal part ``sum_l P_l rho P_l``."""
    m = matrix_of(rho)
    if m.shape[0] != basis.dim:
        raise DimensionMismatch(f"state dimension {m.shape[0]} vs basis {basis.dim}")
    out = sum(p @ m @ p for p in basis.projectors)
    dims = rho.dims if isinstance(rho, DensityMatrix) else None
    return DensityMatrix.from_numerical(out, dims)


# ----------------------------------------------------------------- schedules


@dataclass(frozen=True, eq=False)
class HamiltonianSchedule:
    """Time-dependent Hamiltonian ``H(t)`` on ``[t_i, t_f]`` (hbar = 1).

    For bipartite schedules ``local`` holds ``(H_A(t), H_B(t), H_int(t))``
    callables and ``dims`` the local dimensions.
    """

    evaluator: Callable[[float], np.ndarray]
    t_i: float
    t_f: float
    name: str = "custom"
    params: dict = field(default_factory=dict)
    local: Optional[tuple] = None
    dims: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if not self.t_f > self.t_i:
            raise ValueError("schedule requires t_f > t_i")
        for t in (self.t_i, 0.5 * (self.t_i + self.t_f), self.t_f):
            h = nk.as_matrix(self.evaluator(t))
            if np.linalg.norm(h - h.conj().T) > 1e-10 * max(1.0, np.linalg.norm(h)):
                raise NonHermitianInput(f"H({t}) is not Hermitian")
        if self.local is not None:
            h_int = self.local[2]
            for t in (self.t_i, self.t_f):
                if np.linalg.norm(h_int(t)) > 1e-12:
                    raise ValueError("interaction must vanish at both endpoints")

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(t), dtype=np.complex128)

    @property
    def dim(self) -> int:
        return self(self.t_i).shape[0]

    def initial(self) -> np.ndarray:
        return self(self.t_i)

    def final(self) -> np.ndarray:
        return self(self.t_f)

    def local_hamiltonians(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self.local is None:
            raise ValueError("schedule is not bipartite")
        return np.asarray(self.local[0](t)), np.asarray(self.local[1](t))

    def sample(self, n_steps: int) -> np.ndarray:
        """``H`` on the half-step grid ``t_i + j dt / 2``, ``j = 0..2 n_steps``."""
        times = np.linspace(self.t_i, self.t_f, 2 * n_steps + 1)
        return np.array([self(t) for t in times])


def static_schedule(h, t_i: float = 0.0, t_f: float = 1.0) -> HamiltonianSchedule:
    h = _frozen(nk.as_matrix(h))
    return HamiltonianSchedule(lambda t: h, t_i, t_f, name="static", params={})


def rotating_xz_schedule(omega_rabi: float = 1.0, omega_drive: float = 1.0, t_i: float = 0.0,
                         t_f: float = 10.0) -> HamiltonianSchedule:
    """``H(t) = (Omega/2) (sin(w t) sigma_x + cos(w t) sigma_z)``."""

    def h(t):
        return 0.5 * omega_rabi * (np.sin(omega_drive * t) * SIGMA_X + np.cos(omega_drive * t) * SIGMA_Z)

    return HamiltonianSchedule(h, t_i, t_f, name="rotating_xz",
                               params={"Omega": omega_rabi, "omega": omega_drive})


def switching_window(t: float, t_i: float, t_f: float) -> float:
    """Smooth on/off profile ``sin^2(pi s)``, ``s = (t - t_i)/(t_f - t_i)``; zero at both ends."""
    s = (t - t_i) / (t_f - t_i)
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return float(np.sin(np.pi * s) ** 2)


def bipartite_switched_schedule(h_a: Callable[[float], np.ndarray], h_b: Callable[[float], np.ndarray],
                                interaction, strength: float, t_i: float = 0.0,
                                t_f: float = 1.0) -> HamiltonianSchedule:
    """``H_A(t) (x) I + I (x) H_B(t) + g w(t) V`` with the window ``w`` vanishing at the endpoints."""
    v = _frozen(nk.as_matrix(interaction))
    da = np.asarray(h_a(t_i)).shape[0]
    db = np.asarray(h_b(t_i)).shape[0]
    if v.shape[0] != da * db:
        raise DimensionMismatch("interaction dimension does not match local dimensions")
    ia, ib = np.eye(da), np.eye(db)

    def h_int(t):
        return strength * switching_window(t, t_i, t_f) * v

    def h(t):
        return np.kron(h_a(t), ib) + np.kron(ia, h_b(t)) + h_int(t)

    return HamiltonianSchedule(h, t_i, t_f, name="bipartite_switched", params={"strength": strength},
                               local=(h_a, h_b, h_int), dims=(da, db))


def constant(h) -> Callable[[float], np.ndarray]:
    h = _frozen(nk.as_matrix(h))
    return lambda t: h


# ------------------------------------------------------------ thermodynamics


def thermal_state(h, beta: float) -> tuple[DensityMatrix, float]:
    """Gibbs state ``exp(-beta H)/Z`` and the partition function ``Z``."""
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    eig = nk.hermitian_eig(h)
    w = eig.eigenvalues
    shift = w[0]
    weights = np.exp(-beta * (w - shift))
    zs = weights.sum()
    v = eig.eigenvectors
    gamma = (v * (weights / zs)) @ v.conj().T
    z = float(zs * np.exp(-beta * shift))
    return DensityMatrix(gamma), z


def free_energy_difference(z_i: float, z_f: float, beta: float) -> float:
    if z_i <= 0 or z_f <= 0:
        raise NonpositivePartitionFunction("partition functions must be positive")
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(-np.log(z_f / z_i) / beta)


# ------------------------------------------------------------------ entropies


def von_neumann_entropy(rho) -> float:
    w = nk.hermitian_eig(matrix_of(rho)).eigenvalues
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def relative_entropy(rho, sigma, floor: float = 1e-12) -> float:
    """``D(rho || sigma) = Tr rho (ln rho - ln sigma)`` in nats.

    Raises
    ------
    SupportViolation
        If ``rho`` has weight on an eigenvector of ``sigma`` whose eigenvalue
        is below ``floor`` (the divergence is infinite).
    """
    r = matrix_of(rho)
    s = matrix_of(sigma)
    if r.shape != s.shape:
        raise DimensionMismatch("relative entropy of operators with different shapes")
    es = nk.hermitian_eig(s)
    weights = np.real(np.einsum("ij,ik,kj->j", es.eigenvectors.conj(), r, es.eigenvectors))
    lam = es.eigenvalues
    tiny = lam <= floor * max(lam[-1], 1e-300)
    if np.any(weights[tiny] > floor):
        raise SupportViolation("support of rho is not contained in support of sigma")
    cross = float(np.sum(weights[~tiny] * np.log(lam[~tiny])))
    return -von_neumann_entropy(r) - cross


def relative_entropy_of_coherence(rho, basis: EnergyBasis) -> float:
    """``S(Delta[rho]) - S(rho)`` for the block dephasing in ``basis``."""
    return von_neumann_entropy(dephase(rho, basis)) - von_neumann_entropy(rho)


# -------------------------------------------------------------- literal I/O


def matrix_to_literal(m) -> dict:
    m = matrix_of(m)
    return {"dim": int(m.shape[0]), "real": m.real.tolist(), "imag": m.imag.tolist()}


def matrix_from_literal(obj) -> np.ndarray:
    re = np.asarray(obj["real"], dtype=float)
    im = np.asarray(obj.get("imag", np.zeros_like(re)), dtype=float)
    m = re + 1j * im
    d = int(obj.get("dim", m.shape[0]))
    if m.shape != (d, d):
        raise DimensionMismatch(f"literal has shape {m.shape}, expected ({d}, {d})")
    return m
