"""Fluctuation distances: KL divergences between EPM tables, their minimization over
incoherent or separable states, and the bounds that sandwich them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import numkernel as nk
from .dynamics import QuantumChannel
from .epm import EpmDistribution, epm_distribution
from .errors import LabelMismatch, OptimizationNotConverged, SupportViolation
from .qstate import (
    DensityMatrix,
    EnergyBasis,
    dephase,
    matrix_of,
    random_state,
    relative_entropy,
    relative_entropy_of_coherence,
)
from .resources import BsaDecomposition, bsa_decompose

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    pos = p > 0
    if np.any(q[pos] <= 0):
        return float("inf")
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def _check_aligned(p: EpmDistribution, q: EpmDistribution) -> None:
    if (p.initial_basis.labels != q.initial_basis.labels or p.final_basis.labels != q.final_basis.labels
            or not np.allclose(p.delta_e, q.delta_e, rtol=0, atol=1e-12)):
        raise LabelMismatch("tables have different labels or energy changes")


def kl_divergence_tables(p: EpmDistribution, q: EpmDistribution) -> float:
    """``sum p ln(p/q)`` over the joint tables; ``inf`` when ``q = 0 < p`` somewhere."""
    _check_aligned(p, q)
    return _kl(p.joint.ravel(), q.joint.ravel())


def kl_marginal_split(p: EpmDistribution, q: EpmDistribution) -> tuple[float, float]:
    """KL divergence of the initial and of the final marginals (their sum is the joint KL)."""
    _check_aligned(p, q)
    return _kl(p.p_initial, q.p_initial), _kl(p.p_final, q.p_final)


# ------------------------------------------------------------------------ CFD


@dataclass(frozen=True, eq=False)
class CfdReport:
    cfd: float
    argmin_state: DensityMatrix
    bound_dephased: float
    bound_cre: float
    converged: bool = True
    optimizer_trace: list = field(default_factory=list)

    def ordering_slack(self) -> float:
        """Smallest slack of ``0 <= cfd <= bound_dephased <= bound_cre``."""
        return min(self.cfd, self.bound_dephased - self.cfd, self.bound_cre - self.bound_dephased)

    def to_dict(self) -> dict:
        return {"cfd": self.cfd, "bound_dephased": self.bound_dephased, "bound_cre": self.bound_cre,
                "converged": self.converged, "argmin_diagonal": np.real(np.diag(self.argmin_state.matrix)).tolist()}


def _incoherent_response(channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis):
    """Linear maps from the diagonal weights ``q`` to both marginals of ``diag(q)``."""
    v = basis_i.vectors
    d = v.shape[0]
    a_i = np.zeros((len(basis_i), d))
    for l, block in enumerate(basis_i.blocks):
        a_i[l, list(block)] = 1.0
    a_f = np.zeros((len(basis_f), d))
    for m in range(d):
        proj = np.outer(v[:, m], v[:, m].conj())
        a_f[:, m] = basis_f.probabilities(channel.apply_operator(proj))
    return a_i, a_f


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(y) + 1)
    rho = np.nonzero(u * idx > css - 1)[0][-1]
    theta = (css[rho] - 1) / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def _cfd_objective(p_i, p_f, a_i, a_f):
    def f(q):
        return _kl(p_i, a_i @ q) + _kl(p_f, a_f @ q)

    def grad(q):
        qi = a_i @ q
        qf = a_f @ q
        g = np.zeros_like(q)
        pos = p_i > 0
        g -= a_i[pos].T @ (p_i[pos] / qi[pos])
        pos = p_f > 0
        g -= a_f[pos].T @ (p_f[pos] / qf[pos])
        return g

    return f, grad


def _golden_section(f, lo: float, hi: float, tol: float = 1e-12, trace=None):
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    it = 0
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
        it += 1
        if trace is not None:
            trace.append((it, min(f1, f2)))
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _projected_gradient(f, grad, q0, max_iter: int = 50000, tol: float = 1e-10, trace=None):
    q = q0.copy()
    fq = f(q)
    step = 1.0
    for it in range(max_iter):
        g = grad(q)
        kkt = np.max(np.abs(q - project_simplex(q - g)))
        if trace is not None:
            trace.append((it, fq))
        if kkt < tol:
            return q, fq, True
        step = min(step * 2.0, 1e6)
        while True:
            qn = project_simplex(q - step * g)
            fn = f(qn)
            if fn <= fq + 1e-4 * g @ (qn - q):
                break
            step *= 0.5
            if step < 1e-18:
                return q, fq, False
        q, fq = qn, fn
    return q, fq, False


def cfd(rho_i, channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis,
        q0: Optional[np.ndarray] = None, strict: bool = False) -> CfdReport:
    """Minimal KL divergence between the EPM table of ``rho_i`` and that of an incoherent state.

    Both marginals are linear in the diagonal weights and KL is convex in its
    second argument, so the problem is convex: golden-section search for
    qubits, projected gradient with Armijo steps otherwise.
    """
    rho = rho_i if isinstance(rho_i, DensityMatrix) else DensityMatrix(rho_i)
    p = epm_distribution(rho, channel, basis_i, basis_f)
    a_i, a_f = _incoherent_response(channel, basis_i, basis_f)
    f, grad = _cfd_objective(p.p_initial, p.p_final, a_i, a_f)
    d = rho.dim
    v = basis_i.vectors
    q_deph = np.real(np.einsum("im,ij,jm->m", v.conj(), rho.matrix, v))
    q_deph = np.clip(q_deph, 0.0, None) / np.clip(q_deph, 0.0, None).sum()
    trace: list = []
    converged = True
    if d == 2 and q0 is None:
        x, fx = _golden_section(lambda t: f(np.array([t, 1.0 - t])), 0.0, 1.0, trace=trace)
        q, fq = np.array([x, 1.0 - x]), fx
    else:
        start = np.full(d, 1.0 / d) if q0 is None else np.asarray(q0, dtype=float)
        # keep warm starts off the boundary where the gradient diverges
        start = (1.0 - 1e-6) * project_simplex(start) + 1e-6 / d
        q, fq, converged = _projected_gradient(f, grad, start, trace=trace)
    # the dephased state is itself incoherent
    f_deph = f(q_deph)
    if f_deph < fq:
        q, fq = q_deph, f_deph
    if not converged and strict:
        raise OptimizationNotConverged("CFD projected gradient did not satisfy the KKT test", best=fq)
    bound_deph, bound_cre = cfd_bounds(rho, channel, basis_i, basis_f)
    sigma = DensityMatrix.from_numerical(v @ np.diag(q) @ v.conj().T)
    return CfdReport(max(fq, 0.0), sigma, bound_deph, bound_cre, converged, trace)


def cfd_bounds(rho_i, channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis) -> tuple[float, float]:
    """KL divergence to the dephased state's table, and twice the relative entropy of coherence."""
    p = epm_distribution(rho_i, channel, basis_i, basis_f)
    q = epm_distribution(dephase(rho_i, basis_i), channel, basis_i, basis_f)
    return kl_divergence_tables(p, q), 2.0 * relative_entropy_of_coherence(rho_i, basis_i)


def phase_covariance_check(channel: QuantumChannel, basis: EnergyBasis, n_states: int = 20,
                           angles=(np.pi / 7, 1.0, 2.5), seed: int = 0, tol: float = 1e-9) -> tuple[bool, float]:
    """Test ``R Phi[rho] R^H == Phi[R rho R^H]`` for rotations about the energy axis."""
    v = basis.vectors
    z = v @ np.diag([1.0, -1.0]) @ v.conj().T
    rng = np.random.default_rng(seed)
    states = [random_state(channel.dim, rng).matrix for _ in range(n_states)]
    worst = 0.0
    for phi in angles:
        r = nk.spectral_exp(z, -1j * phi)
        for s in states:
            lhs = r @ channel.apply_operator(s) @ r.conj().T
            rhs = channel.apply_operator(r @ s @ r.conj().T)
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst < tol, worst


# ------------------------------------------------------------------------ EFD


@dataclass(frozen=True, eq=False)
class EfdReport:
    efd_upper_estimate: Optional[float]
    best_separable_found: Optional[DensityMatrix]
    bound_bsa: float
    bound_bsa_relent: float
    bound_relent_ent: float
    kl_rho_star: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"efd_upper_estimate": self.efd_upper_estimate, "bound_bsa": self.bound_bsa,
                "bound_bsa_relent": self.bound_bsa_relent, "bound_relent_ent": self.bound_relent_ent,
                "kl_rho_star": self.kl_rho_star, "converged": self.converged, "diagnostics": self.diagnostics}


def _product_vectors(angles: np.ndarray, with_derivatives: bool = False):
    """Product vectors ``|a_k> (x) |b_k>`` from Bloch angles ``(theta_a, phi_a, theta_b, phi_b)``.

    With ``with_derivatives`` also returns ``d v_k / d angle`` as an array of
    shape ``(K, 4, 4)`` (term, angle, component).
    """
    ang = np.asarray(angles, dtype=float).reshape(-1, 4)
    ta, pa, tb, pb = ang.T
    a = np.stack([np.cos(ta / 2), np.exp(1j * pa) * np.sin(ta / 2)], axis=1)
    b = np.stack([np.cos(tb / 2), np.exp(1j * pb) * np.sin(tb / 2)], axis=1)
    vecs = np.einsum("ki,kj->kij", a, b).reshape(-1, 4)
    if not with_derivatives:
        return vecs
    da_t = np.stack([-0.5 * np.sin(ta / 2), 0.5 * np.exp(1j * pa) * np.cos(ta / 2)], axis=1)
    da_p = np.stack([np.zeros_like(ta), 1j * np.exp(1j * pa) * np.sin(ta / 2)], axis=1)
    db_t = np.stack([-0.5 * np.sin(tb / 2), 0.5 * np.exp(1j * pb) * np.cos(tb / 2)], axis=1)
    db_p = np.stack([np.zeros_like(tb), 1j * np.exp(1j * pb) * np.sin(tb / 2)], axis=1)
    derivs = np.stack([
        np.einsum("ki,kj->kij", da_t, b).reshape(-1, 4),
        np.einsum("ki,kj->kij", da_p, b).reshape(-1, 4),
        np.einsum("ki,kj->kij", a, db_t).reshape(-1, 4),
        np.einsum("ki,kj->kij", a, db_p).reshape(-1, 4),
    ], axis=1)
    return vecs, derivs


def _mixture(weights, vecs) -> np.ndarray:
    return (vecs.T * weights) @ vecs.conj()


def _random_angles(rng: np.random.Generator, n_terms: int) -> np.ndarray:
    return np.column_stack([
        np.arccos(rng.uniform(-1, 1, n_terms)), rng.uniform(0, 2 * np.pi, n_terms),
        np.arccos(rng.uniform(-1, 1, n_terms)), rng.uniform(0, 2 * np.pi, n_terms),
    ]).ravel()


class _TableModel:
    """Both EPM marginals of a state as expectation values of a stack of observables."""

    def __init__(self, rho, channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis):
        obs = [np.asarray(p) for p in basis_i.projectors]
        adjoint = channel.superoperator.conj().T
        d = channel.dim
        for proj in basis_f.projectors:
            back = (adjoint @ proj.reshape(-1, order="F")).reshape(d, d, order="F")
            obs.append(0.5 * (back + back.conj().T))
        self.observables = np.array(obs)
        self.target = self.probs(matrix_of(rho))
        self.pos = self.target > 0

    def probs(self, m) -> np.ndarray:
        return np.real(np.einsum("jab,ba->j", self.observables, m))

    def component_probs(self, vecs) -> np.ndarray:
        """``(n_obs, K)`` matrix of ``<v_k|O_j|v_k>``."""
        return np.real(np.einsum("ka,jab,kb->jk", vecs.conj(), self.observables, vecs))

    def kl(self, q: np.ndarray) -> float:
        return _kl(self.target, q)

    def value_and_grad(self, angles: np.ndarray, w: np.ndarray):
        vecs, dv = _product_vectors(angles, with_derivatives=True)
        ov = np.einsum("jab,kb->jka", self.observables, vecs)
        comp = np.real(np.einsum("ka,jka->jk", vecs.conj(), ov))
        q = comp @ w
        if np.any(q[self.pos] <= 0):
            return 1e6, np.zeros_like(angles)
        ratio = np.zeros_like(q)
        ratio[self.pos] = self.target[self.pos] / q[self.pos]
        dcomp = 2.0 * np.real(np.einsum("kpa,jka->jkp", dv.conj(), ov))
        grad = -np.einsum("j,jkp->kp", ratio, dcomp) * w[:, None]
        return self.kl(q), grad.ravel()


def _em_weights(model: _TableModel, comp: np.ndarray, w: np.ndarray, rounds: int = 200) -> np.ndarray:
    p = model.target
    pos = model.pos
    groups = 2.0  # each marginal sums to one
    for _ in range(rounds):
        q = comp @ w
        if np.any(q[pos] <= 0):
            break
        ratio = np.zeros_like(p)
        ratio[pos] = p[pos] / q[pos]
        w_new = w * (comp.T @ ratio) / groups
        w_new /= w_new.sum()
        if np.max(np.abs(w_new - w)) < 1e-14:
            w = w_new
            break
        w = w_new
    return w


def _efd_search(model: _TableModel, rng: np.random.Generator, n_terms: int, n_starts: int,
                rounds: int) -> tuple[float, np.ndarray, np.ndarray]:
    best = (np.inf, None, None)
    for _ in range(n_starts):
        angles = _random_angles(rng, n_terms)
        w = np.full(n_terms, 1.0 / n_terms)
        value = np.inf
        for _ in range(rounds):
            w = _em_weights(model, model.component_probs(_product_vectors(angles)), w)
            res = minimize(model.value_and_grad, angles, args=(w,), jac=True, method="L-BFGS-B",
                           options={"maxiter": 500})
            angles = res.x
            new = model.kl(model.component_probs(_product_vectors(angles)) @ w)
            if value - new < 1e-13:
                value = min(value, new)
                break
            value = new
        if value < best[0]:
            best = (value, angles.copy(), w.copy())
    return best


def _log_derivative_kernel(s: np.ndarray, u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Gradient of ``Tr(rho ln sigma)`` with respect to ``sigma`` (divided differences of ln)."""
    ls = np.log(s)
    diff = s[:, None] - s[None, :]
    close = np.abs(diff) < 1e-12 * np.maximum(s[:, None], s[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = np.where(close, 1.0 / np.maximum(s[:, None], s[None, :]), (ls[:, None] - ls[None, :]) / diff)
    rb = u.conj().T @ rho @ u
    return u @ (rb * kern) @ u.conj().T


def _relent_search(rho: np.ndarray, rng: np.random.Generator, n_terms: int, n_starts: int):
    """Minimize ``D(rho || sigma)`` over mixtures of ``n_terms`` pure product states."""
    eig_r = np.linalg.eigvalsh(rho)
    eig_r = eig_r[eig_r > 0]
    neg_entropy = float(np.sum(eig_r * np.log(eig_r)))
    best = (np.inf, None)

    def value_and_grad(x):
        ang = x[: 4 * n_terms]
        logits = x[4 * n_terms:]
        w = np.exp(logits - logits.max())
        w /= w.sum()
        vecs, dv = _product_vectors(ang, with_derivatives=True)
        sigma = _mixture(w, vecs)
        s, u = np.linalg.eigh(sigma)
        if s[0] <= 1e-300:
            return 1e6, np.zeros_like(x)
        cross = float(np.real(np.einsum("ij,ji->", u.conj().T @ rho @ u, np.diag(np.log(s)))))
        g = _log_derivative_kernel(s, u, rho)  # d Tr(rho ln sigma) / d sigma
        # d sigma / d angle = w_k (dv v^H + v dv^H)  ->  derivative 2 w_k Re <v_k|G|dv_k>
        gdv = np.einsum("ka,kpa->kp", vecs.conj() @ g, dv)
        d_ang = -2.0 * w[:, None] * np.real(gdv)
        vgv = np.real(np.einsum("ka,ab,kb->k", vecs.conj(), g, vecs))
        d_log = -(w * (vgv - np.sum(w * vgv)))
        return neg_entropy - cross, np.concatenate([d_ang.ravel(), d_log])

    for _ in range(n_starts):
        x0 = np.concatenate([_random_angles(rng, n_terms), np.zeros(n_terms)])
        res = minimize(value_and_grad, x0, jac=True, method="L-BFGS-B", options={"maxiter": 2000})
        if res.fun < best[0]:
            w = np.exp(res.x[4 * n_terms:] - res.x[4 * n_terms:].max())
            best = (float(res.fun), _mixture(w / w.sum(), _product_vectors(res.x[: 4 * n_terms])))
    return best


def _safe_relative_entropy(rho, sigma) -> float:
    try:
        return relative_entropy(rho, sigma)
    except SupportViolation:
        return float("inf")


def efd_bounds(rho_i, channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis,
               bsa: Optional[BsaDecomposition] = None, seed: int = 0, n_terms: int = 8,
               n_starts: int = 3) -> EfdReport:
    """Upper bounds from the best separable part and from a separable relative-entropy search."""
    rho = rho_i if isinstance(rho_i, DensityMatrix) else DensityMatrix(rho_i, (2, 2))
    bsa = bsa_decompose(rho) if bsa is None else bsa
    p = epm_distribution(rho, channel, basis_i, basis_f)
    if bsa.rho_s is None:
        bound_bsa = bound_bsa_relent = float("inf")
    else:
        bound_bsa = kl_divergence_tables(p, epm_distribution(bsa.rho_s, channel, basis_i, basis_f))
        bound_bsa_relent = 2.0 * _safe_relative_entropy(rho, bsa.rho_s)
    rng = np.random.default_rng(seed)
    relent, star = _relent_search(rho.matrix, rng, n_terms, n_starts)
    if bsa.rho_s is not None and 0.5 * bound_bsa_relent < relent:
        relent, star = 0.5 * bound_bsa_relent, bsa.rho_s.matrix
    kl_star = kl_divergence_tables(p, epm_distribution(DensityMatrix.from_numerical(star), channel, basis_i, basis_f))
    return EfdReport(None, None, bound_bsa, bound_bsa_relent, 2.0 * relent, kl_star,
                     diagnostics={"lambda": bsa.lam})


def efd_estimate(rho_i, channel: QuantumChannel, basis_i: EnergyBasis, basis_f: EnergyBasis,
                 bsa: Optional[BsaDecomposition] = None, seed: int = 0, n_terms: int = 8,
                 n_starts: int = 4, rounds: int = 20) -> EfdReport:
    """Upper estimate of the entanglement fluctuation distance.

    Minimizes the table KL divergence over mixtures of ``n_terms`` pure
    product states, alternating EM updates of the weights with quasi-Newton
    updates of the Bloch angles from several random starts. The separable
    part of the best separable approximation is always a candidate, so the
    estimate never exceeds ``bound_bsa``. The value is not certified as the
    global minimum.
    """
    rho = rho_i if isinstance(rho_i, DensityMatrix) else DensityMatrix(rho_i, (2, 2))
    bsa = bsa_decompose(rho) if bsa is None else bsa
    bounds = efd_bounds(rho, channel, basis_i, basis_f, bsa, seed=seed, n_terms=n_terms)
    model = _TableModel(rho, channel, basis_i, basis_f)
    rng = np.random.default_rng(seed + 1)
    value, angles, w = _efd_search(model, rng, n_terms, n_starts, rounds)
    best_state = _mixture(w, _product_vectors(angles))
    source = "search"
    ra = nk.partial_trace(rho.matrix, (2, 2), "A")
    rb = nk.partial_trace(rho.matrix, (2, 2), "B")
    candidates = [("product_of_marginals", np.kron(ra, rb))]
    if bsa.rho_s is not None:
        candidates.append(("bsa_separable_part", bsa.rho_s.matrix))
    for name, cand in candidates:
        v = model.kl(model.probs(cand))
        if v < value:
            value, best_state, source = v, cand, name
    diag = dict(bounds.diagnostics)
    diag.update({"source": source, "min_weight": float(np.min(w)) if source == "search" else None})
    return EfdReport(max(value, 0.0), DensityMatrix.from_numerical(best_state, (2, 2)), bounds.bound_bsa,
                     bounds.bound_bsa_relent, bounds.bound_relent_ent, bounds.kl_rho_star, True, diag)
