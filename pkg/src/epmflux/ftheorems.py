"""Jarzynski-type equalities and trajectory entropy production for EPM statistics.

Every right-hand side is a regrouping of the two traces
``Tr(rho gamma_i^{-1})`` and ``Tr(Phi[rho] gamma_f)`` through a state
decomposition, so each form must match the table average to round-off.
Non-state operators (``rho - gamma`` and correlation remainders) are only
ever used through linearity of the trace and the channel.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numkernel as nk
from .dynamics import QuantumChannel, dual_channel, reference_fixed_point
from .epm import EpmDistribution, epm_distribution, format_float
from .errors import (DecompositionInapplicable, DimensionMismatch, MarginalsNotThermal, NoUniqueFixedPoint,
                     SingularFixedPoint)
from .qstate import DensityMatrix, EnergyBasis, free_energy_difference, matrix_of, thermal_state
from .resources import (
    AthermalityDecomposition,
    BsaDecomposition,
    CorrelationSplit,
    TripleDecomposition,
    bsa_decompose,
    correlation_split,
    nine_term_split,
    triple_decompose,
    weight_of_athermality,
)

JARZYNSKI_FORMS = ("coherence_operator", "athermality", "triple", "correlation_operator", "bsa")
TABLE_MODES = ("single_triple", "single_coherence_operator", "bipartite_correlation", "bipartite_bsa")


@dataclass(frozen=True, eq=False)
class EpmProcess:
    """Forward channel, its time-reversed dual and the thermal references at both ends.

    For bipartite processes ``local_i``/``local_f`` hold the local
    Hamiltonians ``(H_A, H_B)`` at the two endpoints and the bases are
    product bases.
    """

    channel: QuantumChannel
    dual: Optional[QuantumChannel]
    h_i: np.ndarray
    h_f: np.ndarray
    beta: float
    basis_i: EnergyBasis
    basis_f: EnergyBasis
    gamma_i: DensityMatrix
    gamma_f: DensityMatrix
    z_i: float
    z_f: float
    local_i: Optional[tuple] = None
    local_f: Optional[tuple] = None
    dual_error: Optional[Exception] = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, channel: QuantumChannel, h_i, h_f, beta: float, pi=None,
              local_i: Optional[tuple] = None, local_f: Optional[tuple] = None) -> "EpmProcess":
        """Assemble bases, Gibbs states and the dual map.

        ``pi`` defaults to the channel's unique full-rank fixed point (or
        ``I/d`` for unital channels whose fixed space is degenerate).
        """
        if local_i is not None:
            h_i = np.kron(local_i[0], np.eye(len(local_i[1]))) + np.kron(np.eye(len(local_i[0])), local_i[1])
            h_f = np.kron(local_f[0], np.eye(len(local_f[1]))) + np.kron(np.eye(len(local_f[0])), local_f[1])
            basis_i = EnergyBasis.product(EnergyBasis.from_hamiltonian(local_i[0]),
                                          EnergyBasis.from_hamiltonian(local_i[1]))
            basis_f = EnergyBasis.product(EnergyBasis.from_hamiltonian(local_f[0]),
                                          EnergyBasis.from_hamiltonian(local_f[1]))
        else:
            basis_i = EnergyBasis.from_hamiltonian(h_i)
            basis_f = EnergyBasis.from_hamiltonian(h_f)
        h_i = nk.as_matrix(h_i)
        h_f = nk.as_matrix(h_f)
        if h_i.shape[0] != channel.dim:
            raise DimensionMismatch("Hamiltonian and channel dimensions differ")
        gamma_i, z_i = thermal_state(h_i, beta)
        gamma_f, z_f = thermal_state(h_f, beta)
        dual, dual_error = None, None
        try:
            pi = reference_fixed_point(channel) if pi is None else pi
            dual = dual_channel(channel, pi)
        except (SingularFixedPoint, NoUniqueFixedPoint) as exc:
            dual_error = exc  # forward quantities stay available
        return cls(channel, dual, h_i, h_f, float(beta), basis_i, basis_f, gamma_i, gamma_f,
                   z_i, z_f, local_i, local_f, dual_error)

    def reversed_channel(self) -> QuantumChannel:
        """The dual map; re-raises the fixed-point error when it does not exist."""
        if self.dual is None:
            raise self.dual_error
        return self.dual

    @property
    def dim(self) -> int:
        return self.channel.dim

    @property
    def bipartite(self) -> bool:
        return self.local_i is not None

    @property
    def delta_f(self) -> float:
        return free_energy_difference(self.z_i, self.z_f, self.beta)

    # label-probability functionals, linear in their argument
    def p_i(self, op) -> np.ndarray:
        return self.basis_i.probabilities(op)

    def p_f(self, op) -> np.ndarray:
        return self.basis_f.probabilities(self.channel.apply_operator(matrix_of(op)))

    def pt_i(self, op) -> np.ndarray:
        return self.basis_f.probabilities(op)

    def pt_f(self, op) -> np.ndarray:
        return self.basis_i.probabilities(self.reversed_channel().apply_operator(matrix_of(op)))

    def forward(self, rho) -> EpmDistribution:
        return epm_distribution(rho, self.channel, self.basis_i, self.basis_f)

    def backward(self, rho_tilde=None) -> EpmDistribution:
        """Table of the reversed process; ``rho_tilde`` defaults to the final Gibbs state."""
        rho_tilde = self.gamma_f if rho_tilde is None else rho_tilde
        return epm_distribution(rho_tilde, self.reversed_channel(), self.basis_f, self.basis_i)

    def local_gibbs(self, which: str) -> tuple[DensityMatrix, DensityMatrix]:
        local = self.local_i if which == "i" else self.local_f
        if local is None:
            raise DecompositionInapplicable("process is not bipartite")
        return thermal_state(local[0], self.beta)[0], thermal_state(local[1], self.beta)[0]


# ------------------------------------------------------------------ Jarzynski


@dataclass(frozen=True)
class JarzynskiReport:
    lhs: float
    rhs: float
    form: str
    term_breakdown: dict
    tolerance: float = 1e-9

    @property
    def deviation(self) -> float:
        return abs(self.lhs - self.rhs) / max(1.0, abs(self.lhs))

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance

    def to_dict(self) -> dict:
        return {"form": self.form, "lhs": self.lhs, "rhs": self.rhs, "relative_deviation": self.deviation,
                "tolerance": self.tolerance, "passed": self.passed, "term_breakdown": self.term_breakdown}


def jarzynski_lhs(dist: EpmDistribution, beta: float, delta_f: float) -> float:
    """``<exp(-beta (dE - dF))>`` over the joint table."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(np.sum(dist.joint * np.exp(-beta * (dist.delta_e - delta_f))))


def jarzynski_operator_form(rho_i, channel: QuantumChannel, gamma_i, gamma_f) -> float:
    """``Tr(rho gamma_i^{-1}) Tr(Phi[rho] gamma_f)``."""
    r = matrix_of(rho_i)
    first = np.trace(r @ nk.matrix_function(matrix_of(gamma_i), "inv")).real
    second = np.trace(channel.apply_operator(r) @ matrix_of(gamma_f)).real
    return float(first * second)


def _populations_match(rho, gamma, basis: EnergyBasis, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(basis.probabilities(rho) - basis.probabilities(gamma))) <= tol)


def jarzynski_rhs(form: str, process: EpmProcess, rho_i, decomposition=None,
                  tolerance: float = 1e-9) -> JarzynskiReport:
    """Right-hand side of the chosen Jarzynski form, term by term.

    Parameters
    ----------
    form : str
        One of ``coherence_operator``, ``athermality``, ``triple``,
        ``correlation_operator``, ``bsa``.
    process : EpmProcess
    rho_i : DensityMatrix
    decomposition : optional
        Precomputed decomposition matching ``form``; computed when omitted.

    Raises
    ------
    DecompositionInapplicable
        For ``coherence_operator`` when the populations of ``rho_i`` are not Gibbs.
    MarginalsNotThermal
        For ``correlation_operator`` when the marginals are not thermal.
    """
    rho = rho_i if isinstance(rho_i, DensityMatrix) else DensityMatrix(rho_i)
    g_inv = nk.matrix_function(process.gamma_i.matrix, "inv")
    gf = process.gamma_f.matrix
    gi = process.gamma_i.matrix
    d = process.dim

    def tr_inv(op):
        return float(np.real(np.vdot(g_inv.conj().T, matrix_of(op))))

    def tr_f(op):
        return float(np.real(np.vdot(gf.conj().T, process.channel.apply_operator(matrix_of(op)))))

    lhs = jarzynski_lhs(process.forward(rho), process.beta, process.delta_f)
    f_gamma = tr_f(gi)
    if form == "coherence_operator":
        if not _populations_match(rho, process.gamma_i, process.basis_i):
            raise DecompositionInapplicable("populations of the initial state differ from the Gibbs weights")
        f_chi = tr_f(rho) - f_gamma
        terms = {"d": d, "tr_gamma_f_phi_gamma_i": f_gamma, "tr_gamma_f_phi_chi": f_chi}
        rhs = d * (f_gamma + f_chi)
    elif form == "athermality":
        dec = decomposition or weight_of_athermality(rho, process.gamma_i)
        if not isinstance(dec, AthermalityDecomposition):
            raise TypeError("athermality form needs an AthermalityDecomposition")
        a = dec.a
        terms = {"a": a, "d": d, "tr_ginv_tau": tr_inv(dec.tau), "tr_gamma_f_phi_gamma_i": f_gamma,
                 "tr_gamma_f_phi_tau": tr_f(dec.tau)}
        rhs = ((1 - a) * d + a * terms["tr_ginv_tau"]) * ((1 - a) * f_gamma + a * terms["tr_gamma_f_phi_tau"])
    elif form == "triple":
        dec = decomposition or triple_decompose(rho, process.gamma_i, process.basis_i)
        if not isinstance(dec, TripleDecomposition):
            raise TypeError("triple form needs a TripleDecomposition")
        w0, w1, w2 = dec.weights
        terms = {"a": dec.a, "c": dec.c, "d": d,
                 "tr_ginv_tau_d": tr_inv(dec.tau_d), "tr_ginv_tau_c": tr_inv(dec.tau_c),
                 "tr_gamma_f_phi_gamma_i": f_gamma,
                 "tr_gamma_f_phi_tau_d": tr_f(dec.tau_d), "tr_gamma_f_phi_tau_c": tr_f(dec.tau_c)}
        first = w0 * d + w1 * terms["tr_ginv_tau_d"] + w2 * terms["tr_ginv_tau_c"]
        second = w0 * f_gamma + w1 * terms["tr_gamma_f_phi_tau_d"] + w2 * terms["tr_gamma_f_phi_tau_c"]
        rhs = first * second
    elif form == "correlation_operator":
        if not process.bipartite:
            raise DecompositionInapplicable("correlation form needs a bipartite process")
        dec = decomposition or correlation_split(rho, process.beta, *process.local_i)
        if not isinstance(dec, CorrelationSplit):
            raise TypeError("correlation form needs a CorrelationSplit")
        e = dec.correlation_operator
        terms = {"d": d, "tr_ginv_E": tr_inv(e), "tr_gamma_f_phi_gamma_i": f_gamma, "tr_gamma_f_phi_E": tr_f(e)}
        rhs = (d + terms["tr_ginv_E"]) * (f_gamma + terms["tr_gamma_f_phi_E"])
    elif form == "bsa":
        if not process.bipartite:
            raise DecompositionInapplicable("BSA form needs a bipartite process")
        dec = decomposition or bsa_decompose(rho)
        if not isinstance(dec, BsaDecomposition):
            raise TypeError("bsa form needs a BsaDecomposition")
        ga, gb = process.local_gibbs("i")
        ba, bb = process.basis_i.local
        first_sep = second_sep = 0.0
        per_term = []
        for r_j, rho_a, rho_b in dec.product_terms:
            nine = nine_term_split(rho_a, rho_b, ga, gb, ba, bb)
            j_i = nine.thermal_weight * d + tr_inv(nine.rho_d) + tr_inv(nine.rho_c)
            j_f = nine.thermal_weight * f_gamma + tr_f(nine.rho_d) + tr_f(nine.rho_c)
            per_term.append({"r": r_j, "thermal_weight": nine.thermal_weight,
                             "tr_ginv_rho_d": tr_inv(nine.rho_d), "tr_ginv_rho_c": tr_inv(nine.rho_c),
                             "tr_gamma_f_phi_rho_d": tr_f(nine.rho_d), "tr_gamma_f_phi_rho_c": tr_f(nine.rho_c)})
            first_sep += r_j * j_i
            second_sep += r_j * j_f
        lam = dec.lam
        # remainder = lam * rho_E exactly, so the entangled terms carry the lam factor
        ent_i = tr_inv(dec.remainder)
        ent_f = tr_f(dec.remainder)
        j_first = (1 - lam) * first_sep + ent_i
        j_second = (1 - lam) * second_sep + ent_f
        terms = {"lambda": lam, "d": d, "J_i": j_first, "J_f": j_second,
                 "lambda_tr_ginv_rho_E": ent_i, "lambda_tr_gamma_f_phi_rho_E": ent_f,
                 "tr_gamma_f_phi_gamma_i": f_gamma, "product_terms": per_term}
        rhs = j_first * j_second
    else:
        raise ValueError(f"unknown Jarzynski form {form!r}")
    return JarzynskiReport(lhs, float(rhs), form, terms, tolerance)


def applicable_forms(process: EpmProcess, rho) -> list[str]:
    forms = ["athermality", "triple"]
    if _populations_match(rho, process.gamma_i, process.basis_i):
        forms.insert(0, "coherence_operator")
    if process.bipartite:
        try:
            correlation_split(rho, process.beta, *process.local_i)
            forms.append("correlation_operator")
        except MarginalsNotThermal:
            pass
        forms.append("bsa")
    return forms


def applicable_table_modes(process: EpmProcess, rho, rho_tilde=None) -> list[str]:
    """Entropy-table modes whose decompositions exist for both the forward state
    and the backward initial state (``rho_tilde`` defaults to the final Gibbs state)."""
    rho_t = process.gamma_f if rho_tilde is None else rho_tilde
    if not process.bipartite:
        modes = ["single_triple"]
        if (_populations_match(rho, process.gamma_i, process.basis_i)
                and _populations_match(rho_t, process.gamma_f, process.basis_f)):
            modes.append("single_coherence_operator")
        return modes
    modes = ["bipartite_bsa"]
    try:
        correlation_split(rho, process.beta, *process.local_i)
        correlation_split(rho_t, process.beta, *process.local_f)
        modes.append("bipartite_correlation")
    except MarginalsNotThermal:
        pass
    return modes


# -------------------------------------------------------- entropy production

FLAG_OK = "ok"
FLAG_FORWARD_ZERO = "forward_zero"
FLAG_BACKWARD_ZERO = "backward_zero"
FLAG_SINGULAR = "singular_term"

COLUMNS = ("ds_tot", "tpm_part", "tpm_identity", "d_sigma", "d_theta", "d_sigma_coh", "d_psi",
           "d_lambda", "d_xi", "residual", "psi_split_residual")


@dataclass(frozen=True, eq=False)
class TrajectoryEntropyTable:
    """Per-trajectory entropy production and its additive corrections.

    Each column is an ``(n_initial, n_final)`` array indexed by the forward
    labels ``(l, k)``; columns that do not apply to ``mode`` are NaN.
    ``tpm_part`` is ``ln(p_i(gamma_i)[l] / p~_i(gamma_f)[k])`` and
    ``tpm_identity`` its deviation from ``beta (dE - dF)`` (zero for
    non-degenerate spectra).
    """

    mode: str
    labels_i: tuple
    labels_f: tuple
    p_forward: np.ndarray
    p_backward: np.ndarray
    columns: dict
    flags: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def ok_mask(self) -> np.ndarray:
        return self.flags == FLAG_OK

    def max_residual(self) -> float:
        res = self.columns["residual"][self.ok_mask()]
        return float(np.max(np.abs(res))) if res.size else 0.0

    def rows(self) -> list[dict]:
        out = []
        for a, li in enumerate(self.labels_i):
            for b, lf in enumerate(self.labels_f):
                row = {"l": li, "k": lf, "P_forward": float(self.p_forward[a, b]),
                       "P_backward": float(self.p_backward[a, b]), "support_flag": str(self.flags[a, b])}
                row.update({c: float(self.columns[c][a, b]) for c in COLUMNS})
                out.append(row)
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "k", "P_forward", "P_backward", *COLUMNS, "support_flag"])
            for row in self.rows():
                nums = [row["P_forward"], row["P_backward"], *(row[c] for c in COLUMNS)]
                w.writerow([_label(row["l"]), _label(row["k"]),
                            *("" if np.isnan(x) else format_float(x) for x in nums), row["support_flag"]])


def _label(lab) -> str:
    return "-".join(map(str, lab)) if isinstance(lab, tuple) else str(lab)


def _log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x)


def _div(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.true_divide(x, y)


def _row(v):
    return np.asarray(v)[:, None]


def _col(v):
    return np.asarray(v)[None, :]


def entropy_table(forward: EpmDistribution, backward: EpmDistribution, mode: str, process: EpmProcess,
                  decompositions: Optional[dict] = None) -> TrajectoryEntropyTable:
    """Trajectory entropy production ``ln(P(l,k) / P~(k,l))`` and its decomposition.

    Parameters
    ----------
    forward, backward : EpmDistribution
        Tables of the forward process and of the reversed process (built from
        the dual map, with initial and final bases swapped).
    mode : str
        ``single_triple``, ``single_coherence_operator``,
        ``bipartite_correlation`` or ``bipartite_bsa``.
    process : EpmProcess
    decompositions : dict, optional
        ``{"forward": ..., "backward": ...}`` decompositions matching ``mode``;
        computed from the states stored in the tables when omitted.
    """
    if mode not in TABLE_MODES:
        raise ValueError(f"unknown entropy table mode {mode!r}")
    if forward.shape != backward.shape[::-1]:
        raise DimensionMismatch("forward and backward tables are not aligned")
    decompositions = decompositions or {}
    rho, rho_t = forward.state, backward.state
    beta = process.beta
    gi, gf = process.gamma_i.matrix, process.gamma_f.matrix

    p_fwd = forward.joint
    p_bwd = np.outer(backward.p_final, backward.p_initial)
    nan = np.full(p_fwd.shape, np.nan)
    cols = {c: nan.copy() for c in COLUMNS}

    pi_g = process.p_i(gi)
    pf_g = process.p_f(gi)
    pti_g = process.pt_i(gf)
    ptf_g = process.pt_f(gf)

    cols["ds_tot"] = _log(p_fwd) - _log(p_bwd)
    cols["tpm_part"] = _row(np.log(pi_g)) - _col(np.log(pti_g))
    cols["tpm_identity"] = cols["tpm_part"] - beta * (forward.delta_e - process.delta_f)
    cols["d_sigma"] = _col(np.log(pf_g)) - _row(np.log(ptf_g))
    corrections = []

    if mode == "single_triple":
        fw = decompositions.get("forward") or triple_decompose(rho, process.gamma_i, process.basis_i)
        bw = decompositions.get("backward") or triple_decompose(rho_t, process.gamma_f, process.basis_f)

        def theta_sigma(dec, p_tau_d, p_tau_c, p_ref):
            base = (1 - dec.a) + dec.a * (1 - dec.c) * _div(p_tau_d, p_ref)
            theta = _log(base)
            sigma = _log(1 + dec.a * dec.c * _div(p_tau_c, p_ref * base))
            return theta, sigma

        th_i, si_i = theta_sigma(fw, process.p_i(fw.tau_d), process.p_i(fw.tau_c), pi_g)
        th_f, si_f = theta_sigma(fw, process.p_f(fw.tau_d), process.p_f(fw.tau_c), pf_g)
        tth_i, tsi_i = theta_sigma(bw, process.pt_i(bw.tau_d), process.pt_i(bw.tau_c), pti_g)
        tth_f, tsi_f = theta_sigma(bw, process.pt_f(bw.tau_d), process.pt_f(bw.tau_c), ptf_g)
        cols["d_theta"] = _row(th_i) + _col(th_f) - _col(tth_i) - _row(tth_f)
        cols["d_sigma_coh"] = _row(si_i) + _col(si_f) - _col(tsi_i) - _row(tsi_f)
        corrections = ["d_theta", "d_sigma_coh"]
    elif mode == "single_coherence_operator":
        if not _populations_match(rho, process.gamma_i, process.basis_i):
            raise DecompositionInapplicable("forward populations are not Gibbs")
        if not _populations_match(rho_t, process.gamma_f, process.basis_f):
            raise DecompositionInapplicable("backward populations are not Gibbs")
        chi = rho.matrix - gi
        chi_t = rho_t.matrix - gf
        s_i = _log(1 + _div(process.p_i(chi), pi_g))
        s_f = _log(1 + _div(process.p_f(chi), pf_g))
        ts_i = _log(1 + _div(process.pt_i(chi_t), pti_g))
        ts_f = _log(1 + _div(process.pt_f(chi_t), ptf_g))
        cols["d_sigma_coh"] = _row(s_i) + _col(s_f) - _col(ts_i) - _row(ts_f)
        corrections = ["d_sigma_coh"]
    elif mode == "bipartite_correlation":
        if not process.bipartite:
            raise DecompositionInapplicable("correlation mode needs a bipartite process")
        fw = decompositions.get("forward") or correlation_split(rho, beta, *process.local_i)
        bw = decompositions.get("backward") or correlation_split(rho_t, beta, *process.local_f)
        cols["d_psi"] = _psi(process, fw.correlation_operator, bw.correlation_operator, pi_g, pf_g, pti_g, ptf_g)
        corrections = ["d_psi"]
    elif mode == "bipartite_bsa":
        if not process.bipartite:
            raise DecompositionInapplicable("BSA mode needs a bipartite process")
        fw = decompositions.get("forward") or bsa_decompose(rho)
        bw = decompositions.get("backward") or bsa_decompose(rho_t)
        lam_i, xi_i, lam_f, xi_f = _lambda_xi(process, fw, "forward", pi_g, pf_g)
        tlam_i, txi_i, tlam_f, txi_f = _lambda_xi(process, bw, "backward", pti_g, ptf_g)
        cols["d_lambda"] = _row(lam_i) + _col(lam_f) - _col(tlam_i) - _row(tlam_f)
        cols["d_xi"] = _row(xi_i) + _col(xi_f) - _col(txi_i) - _row(txi_f)
        cols["d_psi"] = _psi(process, rho.matrix - gi, rho_t.matrix - gf, pi_g, pf_g, pti_g, ptf_g)
        cols["psi_split_residual"] = cols["d_psi"] - (cols["d_lambda"] + cols["d_xi"])
        corrections = ["d_lambda", "d_xi"]

    explained = cols["tpm_part"] + cols["d_sigma"] + sum(cols[c] for c in corrections)
    cols["residual"] = cols["ds_tot"] - explained

    flags = np.full(p_fwd.shape, FLAG_OK, dtype=object)
    terms_finite = np.isfinite(explained) & np.isfinite(cols["tpm_identity"])
    if mode == "bipartite_bsa":
        terms_finite &= np.isfinite(cols["psi_split_residual"])
    flags[~terms_finite] = FLAG_SINGULAR
    flags[(p_bwd <= 0) & (p_fwd > 0)] = FLAG_BACKWARD_ZERO
    flags[p_fwd <= 0] = FLAG_FORWARD_ZERO
    for c in cols.values():
        c.flags.writeable = False
    return TrajectoryEntropyTable(mode, forward.initial_basis.labels, forward.final_basis.labels,
                                  p_fwd, p_bwd, cols, flags)


def _psi(process, e, e_t, pi_g, pf_g, pti_g, ptf_g):
    s_i = _log(1 + _div(process.p_i(e), pi_g))
    s_f = _log(1 + _div(process.p_f(e), pf_g))
    ts_i = _log(1 + _div(process.pt_i(e_t), pti_g))
    ts_f = _log(1 + _div(process.pt_f(e_t), ptf_g))
    return _row(s_i) + _col(s_f) - _col(ts_i) - _row(ts_f)


def _lambda_xi(process: EpmProcess, dec: BsaDecomposition, direction: str, p_ref_i, p_ref_f):
    """Classical-correlation (Lambda) and entanglement (Xi) terms for both measurements."""
    if direction == "forward":
        ga, gb = process.local_gibbs("i")
        ba, bb = process.basis_i.local
        first, second = process.p_i, process.p_f
    else:
        ga, gb = process.local_gibbs("f")
        ba, bb = process.basis_f.local
        first, second = process.pt_i, process.pt_f
    lam = dec.lam
    out = []
    for probe, p_ref in ((first, p_ref_i), (second, p_ref_f)):
        if dec.product_terms and lam < 1.0:
            mix = np.zeros_like(p_ref)
            for r_j, rho_a, rho_b in dec.product_terms:
                nine = nine_term_split(rho_a, rho_b, ga, gb, ba, bb)
                s_j = nine.thermal_weight + _div(probe(nine.rho_d), p_ref) + _div(probe(nine.rho_c), p_ref)
                mix = mix + r_j * s_j
            big_lambda = _log(mix)
        else:
            big_lambda = np.zeros_like(p_ref)
        xi = _log((1 - lam) + _div(probe(dec.remainder), p_ref * np.exp(big_lambda)))
        out.extend([big_lambda, xi])
    return out[0], out[1], out[2], out[3]


def integral_ft_check(table: TrajectoryEntropyTable, forward: Optional[EpmDistribution] = None,
                      tolerance: float = 1e-9) -> dict:
    """Averages over the forward table and the integral fluctuation-theorem checks.

    Rows with ``P = 0`` contribute nothing; rows with ``P > 0`` and
    ``P~ = 0`` make the integral theorem invalid and are reported.
    """
    p = table.p_forward
    ds = table["ds_tot"]
    full_support = bool(np.all(table.p_backward > 0) and np.all(p > 0))
    use = (p > 0) & np.isfinite(ds)
    out = {"mode": table.mode, "full_support": full_support,
           "n_backward_zero": int(np.sum(table.flags == FLAG_BACKWARD_ZERO)),
           "n_forward_zero": int(np.sum(table.flags == FLAG_FORWARD_ZERO)),
           "n_singular": int(np.sum(table.flags == FLAG_SINGULAR))}
    out["exp_neg_ds"] = float(np.sum(p[use] * np.exp(-ds[use])))
    out["mean_ds"] = float(np.sum(p[use] * ds[use]))
    for name in ("tpm_part", "d_sigma", "d_theta", "d_sigma_coh", "d_psi", "d_lambda", "d_xi"):
        col = table[name]
        if np.all(np.isnan(col)):
            continue
        ok = use & np.isfinite(col)
        out["mean_" + name] = float(np.sum(p[ok] * col[ok]))
    if not np.all(np.isnan(table["d_sigma_coh"])):
        col = table["d_sigma_coh"]
        ok = use & np.isfinite(col)
        out["exp_neg_d_sigma_coh"] = float(np.sum(p[ok] * np.exp(-col[ok])))
    budget_terms = ["mean_tpm_part", "mean_d_sigma", "mean_d_theta", "mean_d_sigma_coh", "mean_d_psi"]
    if table.mode == "bipartite_bsa":
        budget_terms = ["mean_tpm_part", "mean_d_sigma", "mean_d_lambda", "mean_d_xi"]
    out["second_law_budget"] = float(sum(out.get(k, 0.0) for k in budget_terms))
    out["ift_passed"] = bool(full_support and abs(out["exp_neg_ds"] - 1.0) <= tolerance)
    out["second_law_passed"] = bool(out["mean_ds"] >= -1e-10 and out["second_law_budget"] >= -tolerance)
    if forward is not None and not np.allclose(forward.joint, p, rtol=0, atol=1e-15):
        warnings.warn("forward table does not match the entropy table", stacklevel=2)
    return out
