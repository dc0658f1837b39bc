"""Resource decompositions of states relative to thermal, incoherent and separable sets."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numkernel as nk
from .errors import (
    DimensionMismatch,
    MarginalsNotThermal,
    OptimizationNotConverged,
    SingularReference,
)
from .qstate import DensityMatrix, EnergyBasis, matrix_of, matrix_to_literal, thermal_state

COMPONENT_TOL = 1e-8
SNAP = 1e-12
YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def _component(m, dims=None, tol: float = COMPONENT_TOL) -> DensityMatrix:
    # decomposition pieces are validated but never repaired, so that the
    # reconstruction identities hold to round-off
    return DensityMatrix(m, dims, tol=tol)


# ---------------------------------------------------------------- athermality


@dataclass(frozen=True, eq=False)
class AthermalityDecomposition:
    """``rho = (1 - a) gamma + a tau`` with minimal ``a``."""

    a: float
    tau: DensityMatrix
    reference: DensityMatrix
    mu_min: float

    def reconstruct(self) -> np.ndarray:
        return (1 - self.a) * self.reference.matrix + self.a * self.tau.matrix

    def to_dict(self) -> dict:
        return {"a": self.a, "tau": matrix_to_literal(self.tau), "reference": matrix_to_literal(self.reference)}


def weight_of_athermality(rho, gamma) -> AthermalityDecomposition:
    """Smallest ``a`` with ``rho - (1 - a) gamma >= 0``.

    ``rho - s gamma >= 0`` holds iff ``s <= mu_min(gamma^{-1/2} rho gamma^{-1/2})``,
    so ``a = 1 - mu_min``. For ``a = 0`` the leftover state is set to ``gamma``.

    Raises
    ------
    SingularReference
        If ``gamma`` has an eigenvalue below 1e-10.
    """
    r = matrix_of(rho)
    g = matrix_of(gamma)
    gamma = gamma if isinstance(gamma, DensityMatrix) else DensityMatrix(g)
    if nk.hermitian_eig(g).eigenvalues[0] <= 1e-10:
        raise SingularReference("reference state is not full rank")
    ih = nk.matrix_function(g, "inv_sqrt")
    x = ih @ r @ ih
    mu = float(nk.hermitian_eig(0.5 * (x + x.conj().T), check=False).eigenvalues[0])
    a = min(max(1.0 - mu, 0.0), 1.0)
    if a < SNAP:
        return AthermalityDecomposition(0.0, gamma, gamma, mu)
    if 1.0 - a < SNAP:
        return AthermalityDecomposition(1.0, _component(r), gamma, mu)
    tau = (r - (1 - a) * g) / a
    return AthermalityDecomposition(a, _component(tau, tol=max(COMPONENT_TOL, 1e-12 / a)), gamma, mu)


def athermality_bisection(rho, gamma, tol: float = 1e-13) -> float:
    """Reference value of ``a`` from bisection on ``max{s : rho - s gamma >= 0}``."""
    r = matrix_of(rho)
    g = matrix_of(gamma)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        s = 0.5 * (lo + hi)
        if np.linalg.eigvalsh(r - s * g)[0] >= 0.0:
            lo = s
        else:
            hi = s
    return 1.0 - lo


# ----------------------------------------------------------------- coherence


@dataclass(frozen=True, eq=False)
class CoherenceDecomposition:
    """``rho = (1 - c) sigma + c tau`` with ``sigma`` diagonal in the reference basis."""

    c: float
    sigma: DensityMatrix
    tau: DensityMatrix

    def reconstruct(self) -> np.ndarray:
        return (1 - self.c) * self.sigma.matrix + self.c * self.tau.matrix

    def to_dict(self) -> dict:
        return {"c": self.c, "sigma": matrix_to_literal(self.sigma), "tau": matrix_to_literal(self.tau)}


def _qubit_diagonal_mass(p: float, q: float, g: float) -> np.ndarray:
    """Maximal diagonal ``x`` with ``[[p - x0, g], [g*, q - x1]] >= 0``."""
    if g <= min(p, q):
        return np.array([p - g, q - g])
    if p <= q:
        return np.array([0.0, q - g * g / p])
    return np.array([p - g * g / q, 0.0])


def _barrier_diagonal_mass(r: np.ndarray, max_newton: int = 200) -> np.ndarray:
    """Maximize ``sum x`` over ``x >= 0`` with ``r - diag(x) >= 0`` by a log-barrier method.

    Only basis vectors inside the range of ``r`` can carry weight; the problem
    is solved on that range, where it has a strictly feasible point.
    """
    d = r.shape[0]
    eig = nk.hermitian_eig(r, check=False)
    w, v = eig.eigenvalues, eig.eigenvectors
    keep = w > 1e-12 * max(w[-1], 1e-300)
    vr = v[:, keep]
    rr = np.diag(w[keep]).astype(np.complex128)
    # basis vector e_i lies in range(r) iff its projection onto the range has unit norm
    in_range = [i for i in range(d) if 1.0 - np.linalg.norm(vr[i, :]) ** 2 < 1e-10]
    x_full = np.zeros(d)
    if not in_range:
        return x_full
    b = vr[in_range, :].conj()  # rows b_i = W^H e_i
    m = len(in_range)

    def slack(x):
        return rr - (b.T * x) @ b.conj()

    x = np.full(m, 1e-3 * min(w[keep]) / m)
    mu = 1.0
    converged = False
    for _ in range(60):
        for _ in range(max_newton):
            s = slack(x)
            sinv = np.linalg.inv(s)
            q = np.real(b.conj() @ sinv @ b.T)  # q_ij = b_i^H S^{-1} b_j
            grad = -1.0 - mu / x + mu * np.diag(q)
            hess = mu * np.diag(1.0 / x ** 2) + mu * np.abs(b.conj() @ sinv @ b.T) ** 2
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                # near the optimum the slack term is rank-deficient
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = float(-grad @ step)
            if dec < 1e-14 * max(1.0, mu):
                break
            t = 1.0
            f0 = _barrier_value(x, s, mu)
            while True:
                xn = x + t * step
                if np.all(xn > 0):
                    sn = slack(xn)
                    if np.linalg.eigvalsh(sn)[0] > 0 and _barrier_value(xn, sn, mu) <= f0 - 0.25 * t * dec:
                        break
                t *= 0.5
                if t < 1e-20:
                    break
            if t < 1e-20:
                break
            x = xn
        if mu * (m + int(keep.sum())) < 1e-15:
            converged = True
            break
        mu *= 0.2
    if not converged:
        raise OptimizationNotConverged("coherence barrier method did not reach its gap target", best=x)
    x_full[in_range] = x
    return x_full


def _barrier_value(x, s, mu):
    sign, logdet = np.linalg.slogdet(s)
    return float(-np.sum(x) - mu * (np.sum(np.log(x)) + logdet))


def weight_of_coherence(rho, basis: EnergyBasis, method: str = "auto") -> CoherenceDecomposition:
    """Smallest ``c`` such that ``rho - (1 - c) sigma >= 0`` for a diagonal state ``sigma``.

    Equivalent to maximizing ``Tr D`` over diagonal ``D >= 0`` with
    ``rho - D >= 0``. Qubits use the closed form; larger systems a
    log-barrier interior-point method.
    """
    r = matrix_of(rho)
    v = basis.vectors
    if r.shape[0] != basis.dim:
        raise DimensionMismatch("state and basis dimensions differ")
    rb = v.conj().T @ r @ v
    rb = 0.5 * (rb + rb.conj().T)
    diag = np.real(np.diag(rb))
    off = rb - np.diag(np.diag(rb))
    dims = rho.dims if isinstance(rho, DensityMatrix) else None
    state = rho if isinstance(rho, DensityMatrix) else DensityMatrix(r)
    if np.max(np.abs(off), initial=0.0) < 1e-14:
        return CoherenceDecomposition(0.0, state, state)
    if method == "auto":
        method = "closed_form" if r.shape[0] == 2 else "barrier"
    if method == "closed_form":
        x = _qubit_diagonal_mass(diag[0], diag[1], abs(rb[0, 1]))
    else:
        x = _barrier_diagonal_mass(rb)
    mass = float(x.sum())
    c = 1.0 - mass
    if c < SNAP:
        return CoherenceDecomposition(0.0, state, state)
    if mass < SNAP:
        sigma = _component(v @ np.diag(diag) @ v.conj().T, dims)
        return CoherenceDecomposition(1.0, sigma, state)
    sigma = v @ np.diag(x / mass) @ v.conj().T
    tau = (r - v @ np.diag(x) @ v.conj().T) / c
    return CoherenceDecomposition(c, _component(sigma, dims), _component(tau, dims, tol=max(COMPONENT_TOL, 1e-12 / c)))


# -------------------------------------------------------------------- triple


@dataclass(frozen=True, eq=False)
class TripleDecomposition:
    """``rho = (1 - a) gamma + a (1 - c) tau_d + a c tau_c``."""

    a: float
    c: float
    gamma: DensityMatrix
    tau_d: DensityMatrix
    tau_c: DensityMatrix

    @property
    def weights(self) -> tuple[float, float, float]:
        return 1 - self.a, self.a * (1 - self.c), self.a * self.c

    def reconstruct(self) -> np.ndarray:
        w0, w1, w2 = self.weights
        return w0 * self.gamma.matrix + w1 * self.tau_d.matrix + w2 * self.tau_c.matrix

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "c": self.c,
            "gamma": matrix_to_literal(self.gamma),
            "tau_d": matrix_to_literal(self.tau_d),
            "tau_c": matrix_to_literal(self.tau_c),
        }


def triple_decompose(rho, gamma, basis: EnergyBasis) -> TripleDecomposition:
    """Athermality weight first, then the weight of coherence of the leftover state."""
    ath = weight_of_athermality(rho, gamma)
    if ath.a == 0.0:
        g = ath.reference
        return TripleDecomposition(0.0, 0.0, g, g, g)
    coh = weight_of_coherence(ath.tau, basis)
    return TripleDecomposition(ath.a, coh.c, ath.reference, coh.sigma, coh.tau)


# --------------------------------------------------------------- correlations


@dataclass(frozen=True, eq=False)
class CorrelationSplit:
    """``rho = gamma_A (x) gamma_B + E`` with ``E`` traceless on each side."""

    marginal_a: DensityMatrix
    marginal_b: DensityMatrix
    correlation_operator: np.ndarray

    @property
    def reference(self) -> np.ndarray:
        return np.kron(self.marginal_a.matrix, self.marginal_b.matrix)


def correlation_split(rho, beta: float, h_a, h_b, tol: float = 1e-8) -> CorrelationSplit:
    """Split a state with thermal marginals into the product of Gibbs states and a remainder.

    Raises
    ------
    MarginalsNotThermal
        When a reduced state differs from the local Gibbs state by more than ``tol``.
    """
    r = matrix_of(rho)
    ga, _ = thermal_state(h_a, beta)
    gb, _ = thermal_state(h_b, beta)
    dims = (ga.dim, gb.dim)
    ra = nk.partial_trace(r, dims, "A")
    rb = nk.partial_trace(r, dims, "B")
    dev = max(np.linalg.norm(ra - ga.matrix), np.linalg.norm(rb - gb.matrix))
    if dev > tol:
        raise MarginalsNotThermal(f"reduced states deviate from Gibbs states by {dev:.2e}")
    e = r - np.kron(ga.matrix, gb.matrix)
    e.flags.writeable = False
    return CorrelationSplit(ga, gb, e)


# ----------------------------------------------------------------- concurrence


def concurrence(rho, dims=(2, 2)) -> float:
    """Wootters concurrence from the spectrum of ``sqrt(rho) rho~ sqrt(rho)``."""
    r = matrix_of(rho)
    if tuple(dims) != (2, 2) or r.shape != (4, 4):
        raise DimensionMismatch("concurrence is defined here for two qubits")
    flipped = YY @ r.conj() @ YY
    s = nk.matrix_function(r, "sqrt")
    lam = nk.hermitian_eig(s @ flipped @ s, check=False).eigenvalues
    mu = np.sqrt(np.clip(lam, 0.0, None))[::-1]
    return float(max(0.0, mu[0] - mu[1] - mu[2] - mu[3]))


# ------------------------------------------------------------------------ BSA


@dataclass(frozen=True, eq=False)
class BsaDecomposition:
    """``rho = lam rho_E + (1 - lam) rho_S`` with maximal separable weight.

    ``remainder`` is the exact operator ``rho - (1 - lam) rho_S`` (equal to
    ``lam rho_E``); ``rho_e`` is its normalized form when ``lam`` is large
    enough for normalization to be meaningful, else None. ``rho_s`` is
    ``sum_j r_j rho_A_j (x) rho_B_j`` built from ``product_terms`` (None when
    ``lam = 1``).
    """

    lam: float
    rho_e: Optional[DensityMatrix]
    rho_s: Optional[DensityMatrix]
    product_terms: tuple
    remainder: np.ndarray
    separable_operator: np.ndarray

    def reconstruct(self) -> np.ndarray:
        out = self.remainder.copy()
        if self.rho_s is not None:
            out = out + (1 - self.lam) * self.rho_s.matrix
        return out

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "rho_E": None if self.rho_e is None else matrix_to_literal(self.rho_e),
            "rho_S": None if self.rho_s is None else matrix_to_literal(self.rho_s),
            "product_terms": [
                {"r": r, "rho_A": matrix_to_literal(a), "rho_B": matrix_to_literal(b)}
                for r, a, b in self.product_terms
            ],
        }


def _max_separable_part(r: np.ndarray) -> np.ndarray:
    """Largest-trace ``S >= 0`` with ``S^{T_B} >= 0`` and ``r - S >= 0`` (two qubits).

    Positive partial transpose is equivalent to separability for two qubits,
    so this semidefinite program gives the exact best separable part.
    """
    import cvxpy as cp

    warnings.filterwarnings("ignore", message="Initializing a Constant with a nested list")
    eig = nk.hermitian_eig(r, check=False)
    keep = eig.eigenvalues > 1e-12 * eig.eigenvalues[-1]
    v = eig.eigenvectors[:, keep]
    k = v.shape[1]
    x = cp.Variable((k, k), hermitian=True)
    s = v @ x @ v.conj().T
    cons = [x >> 0, np.diag(eig.eigenvalues[keep]) - x >> 0, cp.partial_transpose(s, [2, 2], 1) >> 0]
    prob = cp.Problem(cp.Maximize(cp.real(cp.trace(x))), cons)
    status = None
    for solver, opts in (("CLARABEL", {}), ("SCS", {"eps": 1e-10, "max_iters": 200000})):
        try:
            prob.solve(solver=solver, **opts)
            status = prob.status
        except cp.error.SolverError:
            continue
        if status in ("optimal", "optimal_inaccurate"):
            break
    if x.value is None or status not in ("optimal", "optimal_inaccurate"):
        raise OptimizationNotConverged(f"separable-part SDP failed with status {status}")
    out = v @ x.value @ v.conj().T
    return 0.5 * (out + out.conj().T)


def _takagi(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Takagi factorization ``T = U diag(s) U^T`` of a complex symmetric matrix."""
    n = t.shape[0]
    emb = np.block([[t.real, t.imag], [t.imag, -t.real]])
    w, vecs = np.linalg.eigh(emb)
    order = np.argsort(w)[::-1]
    us, ss = [], []
    for j in order:
        if w[j] <= 1e-14 or len(us) == n:
            break
        us.append(vecs[:n, j] + 1j * vecs[n:, j])
        ss.append(w[j])
    u = np.array(us).T.reshape(n, len(us))
    if len(us) < n:
        # complete with an orthonormal basis of the complement (null directions)
        q, _ = np.linalg.qr(np.hstack([u, np.eye(n)]))
        comp = q[:, len(us):n]
        comp = comp - u @ (u.conj().T @ comp)
        comp, _ = np.linalg.qr(comp)
        u = np.hstack([u, comp])
        ss += [0.0] * (n - len(ss))
    return u, np.array(ss)


def _closing_phases(s: np.ndarray) -> np.ndarray:
    """Angles ``phi`` making ``sum s_j exp(i phi_j)`` as close to zero as possible (4 sides)."""
    s = np.asarray(s, dtype=float)
    order = np.argsort(s)[::-1]
    s1, s2, s3, s4 = s[order]
    lo = max(abs(s1 - s2), abs(s3 - s4))
    hi = min(s1 + s2, s3 + s4)
    length = 0.5 * (lo + hi) if lo <= hi else (abs(s1 - s2) if abs(s1 - s2) <= s3 + s4 else s3 + s4)

    def split(p, q, target):
        # angles alpha, beta with p e^{i alpha} + q e^{i beta} having modulus `target`
        # and argument 0
        if p == 0.0 and q == 0.0:
            return 0.0, 0.0
        cos_b = np.clip((target ** 2 - p ** 2 - q ** 2) / (2 * p * q), -1, 1) if p * q > 0 else 1.0
        b = np.arccos(cos_b)
        z = p + q * np.exp(1j * b)
        rot = -np.angle(z) if abs(z) > 0 else 0.0
        return rot, b + rot

    a1, a2 = split(s1, s2, length)
    a3, a4 = split(s3, s4, length)
    phases = np.empty(4)
    phases[order] = [a1, a2, a3 + np.pi, a4 + np.pi]
    return phases


def separable_product_terms(s: np.ndarray) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Decompose a two-qubit state with zero concurrence into pure product terms.

    Uses the spin-flip construction: subnormalized eigenvectors are rotated
    so the symmetric pre-concurrence matrix is diagonal, phases are chosen so
    the diagonal sums to zero, and four sign-pattern combinations then have
    vanishing pre-concurrence (each is a product vector).
    """
    eig = nk.hermitian_eig(s, check=False)
    keep = eig.eigenvalues > 1e-14
    vecs = eig.eigenvectors[:, keep] * np.sqrt(eig.eigenvalues[keep])
    n = vecs.shape[1]
    tau = vecs.T @ YY @ vecs
    tau = 0.5 * (tau + tau.T)
    u, sv = _takagi(tau)
    x = vecs @ u.conj()
    if n < 4:
        x = np.hstack([x, np.zeros((4, 4 - n))])
        sv = np.concatenate([sv, np.zeros(4 - n)])
    phases = _closing_phases(sv)
    y = x * np.exp(0.5j * phases)
    signs = np.array([[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]])
    terms = []
    for row in signs:
        z = 0.5 * (y @ row)
        weight = float(np.real(np.vdot(z, z)))
        if weight < 1e-15:
            continue
        uu, sing, vh = np.linalg.svd(z.reshape(2, 2))
        a = uu[:, 0]
        b = vh[0, :]
        terms.append((weight, np.outer(a, a.conj()), np.outer(b, b.conj())))
    return terms


def _product_factors(r: np.ndarray, tol: float = 1e-13):
    ra = nk.partial_trace(r, (2, 2), "A")
    rb = nk.partial_trace(r, (2, 2), "B")
    if np.linalg.norm(r - np.kron(ra, rb)) < tol:
        return ra, rb
    return None


def bsa_decompose(rho, dims=(2, 2)) -> BsaDecomposition:
    """Best separable approximation of a two-qubit state.

    The separable weight is the optimum of a small semidefinite program
    (exact for two qubits); the separable part is then written as a mixture
    of at most four pure product states.
    """
    r = matrix_of(rho)
    if tuple(dims) != (2, 2) or r.shape != (4, 4):
        raise DimensionMismatch("best separable approximation is implemented for two qubits")
    prod = _product_factors(r)
    if prod is not None:
        ra, rb = prod
        rho_s = _component(np.kron(ra, rb), (2, 2))
        terms = ((1.0, _component(ra), _component(rb)),)
        return BsaDecomposition(0.0, None, rho_s, terms, r - rho_s.matrix, rho_s.matrix)
    sep = _max_separable_part(r)
    weight = float(np.trace(sep).real)
    if weight < 1e-9:
        return BsaDecomposition(1.0, _component(r, (2, 2)), None, (), r.copy(), np.zeros_like(r))
    raw = separable_product_terms(sep / weight)
    total = sum(t[0] for t in raw)
    terms = tuple((w / total, _component(a), _component(b)) for w, a, b in raw)
    rho_s_m = sum(w * np.kron(a.matrix, b.matrix) for w, a, b in terms)
    rho_s = _component(rho_s_m, (2, 2))
    lam = min(max(1.0 - weight, 0.0), 1.0)
    remainder = r - (1 - lam) * rho_s.matrix
    rho_e = None
    if lam > 1e-6:
        rho_e = DensityMatrix(remainder / lam, (2, 2), tol=max(COMPONENT_TOL, 1e-6 / lam))
    return BsaDecomposition(lam, rho_e, rho_s, terms, remainder, (1 - lam) * rho_s.matrix)


# -------------------------------------------------------------- nine-term split


@dataclass(frozen=True, eq=False)
class NineTermProduct:
    """``rho_A (x) rho_B = w gamma_A (x) gamma_B + rho_d + rho_c``.

    ``rho_d`` collects the products built only from thermal and diagonal
    athermal pieces (excluding the fully thermal one); ``rho_c`` every
    product containing at least one coherent piece.
    """

    thermal_weight: float
    rho_d: np.ndarray
    rho_c: np.ndarray
    gamma: np.ndarray
    local: tuple

    def reconstruct(self) -> np.ndarray:
        return self.thermal_weight * self.gamma + self.rho_d + self.rho_c


def nine_term_split(rho_a, rho_b, gamma_a, gamma_b, basis_a: EnergyBasis, basis_b: EnergyBasis) -> NineTermProduct:
    ta = triple_decompose(rho_a, gamma_a, basis_a)
    tb = triple_decompose(rho_b, gamma_b, basis_b)
    pa = (ta.gamma.matrix, ta.tau_d.matrix, ta.tau_c.matrix)
    pb = (tb.gamma.matrix, tb.tau_d.matrix, tb.tau_c.matrix)
    wa, wb = ta.weights, tb.weights
    rho_d = np.zeros((len(pa[0]) * len(pb[0]),) * 2, dtype=np.complex128)
    rho_c = np.zeros_like(rho_d)
    for i in range(3):
        for j in range(3):
            if i == 0 and j == 0:
                continue
            term = wa[i] * wb[j] * np.kron(pa[i], pb[j])
            if i == 2 or j == 2:
                rho_c += term
            else:
                rho_d += term
    return NineTermProduct(wa[0] * wb[0], rho_d, rho_c, np.kron(pa[0], pb[0]), (ta, tb))


def decomposition_json(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2, sort_keys=True)
