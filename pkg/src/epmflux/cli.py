"""Command-line scenario runner.

Subcommands
-----------
run      execute the tasks of a JSON scenario and write artifacts plus a manifest
sweep    rerun a scenario over values of one parameter and merge the summaries
fig2     coherence sweep of the driven qubit (unitary)
fig3     the same sweep with a ``sigma_x`` jump at rate 0.1

Exit status is 0 when every assertion passes, 1 when some assertion fails
(artifacts are still written) and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import numkernel as nk
from . import scenarios as sc
from .epm import format_float, mean_energy_residual
from .errors import AssertionFailure, ConfigError, EpmfluxError, MarginalsNotThermal
from .ftheorems import applicable_forms, applicable_table_modes, entropy_table, integral_ft_check, jarzynski_lhs, jarzynski_operator_form, \
    jarzynski_rhs
from .measures import cfd, efd_estimate
from .resources import (bsa_decompose, concurrence, correlation_split, triple_decompose, weight_of_athermality,
                        weight_of_coherence)


def thread_count() -> int:
    raw = os.environ.get("EPMFLUX_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"EPMFLUX_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"EPMFLUX_THREADS must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn: Callable, items: list, threads: int) -> list:
    """``map`` over ``items`` with at most ``threads`` workers; results in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, complex):
        return {"real": _jsonable(x.real), "imag": _jsonable(x.imag)}
    return x


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return "" if x is None else str(x)


def write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


class Recorder:
    """Collects assertions with their measured values and tolerances."""

    def __init__(self):
        self.items: list[dict] = []

    def check(self, task: str, name: str, value: float, tolerance: float, relation: str, passed: bool,
              **detail) -> bool:
        self.items.append({"task": task, "name": name, "value": value, "tolerance": tolerance,
                           "relation": relation, "passed": bool(passed), **detail})
        return bool(passed)

    def at_most(self, task: str, name: str, value: float, tolerance: float, **detail) -> bool:
        return self.check(task, name, value, tolerance, "value <= tolerance", value <= tolerance, **detail)

    def at_least(self, task: str, name: str, value: float, bound: float, **detail) -> bool:
        return self.check(task, name, value, bound, "value >= tolerance", value >= bound, **detail)

    @property
    def all_passed(self) -> bool:
        return all(a["passed"] for a in self.items)


# ------------------------------------------------------------------- tasks


def _reconstruct_error(dec, rho) -> float:
    return float(np.max(np.abs(dec.reconstruct() - rho.matrix)))


def task_decompose(scn: sc.Scenario, job: dict, out: Path, rec: Recorder) -> dict:
    tol = scn.tolerances["reconstruct"]
    proc, rho = scn.process, scn.rho_i
    ath = weight_of_athermality(rho, proc.gamma_i)
    coh = weight_of_coherence(rho, proc.basis_i)
    tri = triple_decompose(rho, proc.gamma_i, proc.basis_i)
    payload = {"athermality": ath.to_dict(), "coherence": coh.to_dict(), "triple": tri.to_dict()}
    summary = {"a": ath.a, "c": coh.c, "triple_c": tri.c}
    for name, dec in (("athermality", ath), ("coherence", coh), ("triple", tri)):
        rec.at_most("decompose", f"{name}_reconstruction", _reconstruct_error(dec, rho), tol)
    if scn.bipartite:
        bsa = bsa_decompose(rho, rho.dims)
        conc = concurrence(rho, rho.dims)
        payload["bsa"] = bsa.to_dict()
        payload["concurrence"] = conc
        summary.update({"lambda": bsa.lam, "concurrence": conc, "lambda_minus_concurrence": bsa.lam - conc})
        rec.at_most("decompose", "bsa_reconstruction", _reconstruct_error(bsa, rho), tol)
        try:
            split = correlation_split(rho, proc.beta, *proc.local_i)
            payload["correlation_operator"] = {"operator": split.correlation_operator.real.tolist(),
                                               "operator_imag": split.correlation_operator.imag.tolist()}
        except MarginalsNotThermal as exc:
            payload["correlation_operator"] = {"inapplicable": str(exc)}
    write_json(payload, out / "decompositions.json")
    return summary


def task_jarzynski(scn: sc.Scenario, job: dict, out: Path, rec: Recorder) -> dict:
    tol = scn.tolerances["identity"]
    proc, rho = scn.process, scn.rho_i
    dist = proc.forward(rho)
    dist.to_csv(out / "epm_forward.csv")
    lhs = jarzynski_lhs(dist, proc.beta, proc.delta_f)
    op_form = jarzynski_operator_form(rho, proc.channel, proc.gamma_i, proc.gamma_f)
    summary = {"lhs": lhs}
    rec.at_most("jarzynski", "operator_form", abs(lhs - op_form) / max(1.0, abs(lhs)), tol)
    reports = []
    for form in applicable_forms(proc, rho):
        r = jarzynski_rhs(form, proc, rho, tolerance=tol)
        reports.append(r.to_dict())
        summary[f"deviation_{form}"] = r.deviation
        rec.at_most("jarzynski", form, r.deviation, tol, lhs=r.lhs, rhs=r.rhs)
    resid = mean_energy_residual(dist, rho, proc.channel, proc.h_i, proc.h_f)
    summary["mean_energy_residual"] = resid
    rec.at_most("jarzynski", "mean_energy", resid, scn.tolerances["mean_energy"])
    write_json({"beta": proc.beta, "delta_f": proc.delta_f, "lhs": lhs, "operator_form": op_form,
                "mean_energy_residual": resid, "forms": reports}, out / "jarzynski.json")
    return summary


def task_crooks(scn: sc.Scenario, job: dict, out: Path, rec: Recorder) -> dict:
    tol = scn.tolerances["row"]
    proc = scn.process
    forward, backward = proc.forward(scn.rho_i), proc.backward(scn.rho_tilde)
    summary = {}
    for mode in applicable_table_modes(proc, scn.rho_i, scn.rho_tilde):
        table = entropy_table(forward, backward, mode, proc)
        table.to_csv(out / f"entropy_{mode}.csv")
        res = table.max_residual()
        summary[f"max_residual_{mode}"] = res
        rec.at_most("crooks", f"row_residual_{mode}", res, tol, n_rows_flagged=int(np.sum(~table.ok_mask())))
        if mode == "bipartite_bsa":
            split = table["psi_split_residual"][table.ok_mask()]
            worst = float(np.max(np.abs(split))) if split.size else 0.0
            summary["max_psi_split_residual"] = worst
            rec.at_most("crooks", "psi_split_residual", worst, tol)
    return summary


def task_integral_ft(scn: sc.Scenario, job: dict, out: Path, rec: Recorder) -> dict:
    tol = scn.tolerances["ift"]
    proc = scn.process
    forward, backward = proc.forward(scn.rho_i), proc.backward(scn.rho_tilde)
    mode = "bipartite_bsa" if scn.bipartite else "single_triple"
    table = entropy_table(forward, backward, mode, proc)
    res = integral_ft_check(table, forward, tolerance=tol)
    if res["full_support"]:
        rec.at_most("integral_ft", "exp_neg_ds_minus_one", abs(res["exp_neg_ds"] - 1.0), tol)
        rec.at_least("integral_ft", "mean_ds", res["mean_ds"], -scn.tolerances["second_law"])
    else:
        res["note"] = "backward table lacks full support; integral theorem not asserted"
    if "exp_neg_d_sigma_coh" in res:
        dev = abs(res["exp_neg_d_sigma_coh"] - 1.0)
        if "expect_sigma_ift" in scn.tags:
            rec.at_most("integral_ft", "exp_neg_d_sigma_coh_minus_one", dev, tol)
        else:
            res["sigma_ift_asserted"] = False
    write_json(res, out / "integral_ft.json")
    return {"exp_neg_ds": res["exp_neg_ds"], "mean_ds": res["mean_ds"], "full_support": res["full_support"]}


def _cfd_points(scn: sc.Scenario, gammas: list, threads: int) -> list:
    state_spec = scn.config["initial_state"]
    if state_spec["family"] != "coherent_qubit":
        raise ConfigError("coherence sweeps need the coherent_qubit state family")
    proc = scn.process

    def one(g):
        spec = dict(state_spec, gamma=g)
        rho = sc.build_state(spec, 2, None, scn.seed)
        return cfd(rho, proc.channel, proc.basis_i, proc.basis_f)

    return ordered_map(one, list(gammas), threads)


def _monotone_defect(gammas, values) -> float:
    """Largest decrease of ``values`` along increasing ``|gamma|``; 0 when nondecreasing."""
    order = np.argsort(np.abs(gammas), kind="stable")
    v = np.asarray(values)[order]
    return float(max(0.0, np.max(v[:-1] - v[1:]))) if len(v) > 1 else 0.0


def task_cfd_sweep(scn: sc.Scenario, job: dict, out: Path, rec: Recorder, task: str = "cfd_sweep",
                   threads: int = 1) -> dict:
    default = sc.FIG_GAMMAS if task in ("fig2", "fig3") else [scn.config["initial_state"].get("gamma", 0.0)]
    gammas = [float(g) for g in job.get("gamma", default)]
    if not gammas:
        raise ConfigError("empty gamma grid")
    mirror = [-g for g in gammas if g != 0.0]
    reports = _cfd_points(scn, gammas + mirror, threads)
    pos, neg = reports[: len(gammas)], reports[len(gammas):]
    write_csv(out / "cfd_sweep.csv", ["gamma", "cfd", "bound_dephased", "bound_cre"],
              [[g, r.cfd, r.bound_dephased, r.bound_cre] for g, r in zip(gammas, pos)])
    with open(out / "cfd_trace.log", "w") as fh:
        for g, r in zip(gammas + mirror, reports):
            fh.write(f"gamma={format_float(g)} converged={r.converged} iterations={len(r.optimizer_trace)}\n")
            for it, val in r.optimizer_trace:
                fh.write(f"  {it} {format_float(val)}\n")
    tol = scn.tolerances
    slack = [r.ordering_slack() for r in reports]
    worst = int(np.argmin(slack))
    rec.at_least(task, "ordering_slack", slack[worst], -tol["bound"], gamma=(gammas + mirror)[worst])
    rec.check(task, "all_converged", sum(not r.converged for r in reports), 0, "value == tolerance",
              all(r.converged for r in reports))
    if 0.0 in gammas:
        r0 = pos[gammas.index(0.0)]
        rec.at_most(task, "vanish_at_zero", max(abs(r0.cfd), abs(r0.bound_dephased), abs(r0.bound_cre)),
                    tol["endpoint"])
    summary = {"n_points": len(gammas), "min_ordering_slack": slack[worst]}
    if len(gammas) > 1:
        for sign, grid, reps in (("positive", gammas, pos), ("negative", [-g for g in gammas if g != 0.0], neg)):
            if 0.0 in gammas and sign == "negative":
                grid, reps = [0.0] + grid, [pos[gammas.index(0.0)]] + list(reps)
            defect = _monotone_defect(grid, [r.cfd for r in reps])
            rec.at_most(task, f"cfd_nondecreasing_{sign}", defect, tol["monotone"])
    else:
        summary.update({"cfd": pos[0].cfd, "bound_dephased": pos[0].bound_dephased, "bound_cre": pos[0].bound_cre})
    return summary


def task_efd(scn: sc.Scenario, job: dict, out: Path, rec: Recorder) -> dict:
    tol = scn.tolerances["bound"]
    proc = scn.process
    rep = efd_estimate(scn.rho_i, proc.channel, proc.basis_i, proc.basis_f, seed=scn.seed,
                       n_terms=int(job.get("n_terms", 8)), n_starts=int(job.get("n_starts", 4)))

    def leq(x, y):
        return (x - y) if np.isfinite(y) else -np.inf

    rec.at_most("efd", "estimate_minus_bound_bsa", leq(rep.efd_upper_estimate, rep.bound_bsa), tol)
    rec.at_most("efd", "bound_bsa_minus_bound_bsa_relent", leq(rep.bound_bsa, rep.bound_bsa_relent), tol)
    write_json(rep.to_dict(), out / "efd.json")
    return {"efd_upper_estimate": rep.efd_upper_estimate, "bound_bsa": rep.bound_bsa,
            "bound_bsa_relent": rep.bound_bsa_relent, "bound_relent_ent": rep.bound_relent_ent}


TASK_FUNCS = {
    "decompose": task_decompose,
    "jarzynski": task_jarzynski,
    "crooks": task_crooks,
    "integral_ft": task_integral_ft,
    "efd": task_efd,
}


# ---------------------------------------------------------------- runners


def run_scenario(config: dict, out_root: Path, seed: Optional[int] = None, tol_identity: Optional[float] = None,
                 tol_row: Optional[float] = None, threads: int = 1, out_dir: Optional[Path] = None) -> dict:
    """Run every task of ``config``; returns the manifest.

    Raises
    ------
    ConfigError
        For invalid configurations.
    AssertionFailure
        When an assertion fails; the artifacts and manifest are written first.
    """
    config = json.loads(json.dumps(config))
    if seed is not None:
        config["seed"] = int(seed)
    overrides = {k: v for k, v in (("identity", tol_identity), ("row", tol_row)) if v is not None}
    if overrides:
        config.setdefault("tolerances", {}).update(overrides)
    try:
        scn = sc.build(config)
    except ConfigError:
        raise
    except EpmfluxError as exc:
        raise ConfigError(f"scenario cannot be built: {type(exc).__name__}: {exc}") from None
    out = Path(out_dir) if out_dir is not None else Path(out_root) / scn.name
    out.mkdir(parents=True, exist_ok=True)
    rec = Recorder()
    summaries = {}
    for job in scn.config["tasks"]:
        job = {"task": job} if isinstance(job, str) else job
        name = job["task"]
        try:
            if name in ("cfd_sweep", "fig2", "fig3"):
                summaries[name] = task_cfd_sweep(scn, job, out, rec, task=name, threads=threads)
            else:
                summaries[name] = TASK_FUNCS[name](scn, job, out, rec)
        except ConfigError:
            raise
        except EpmfluxError as exc:
            rec.check(name, "task_completed", type(exc).__name__, None, "no error", False, message=str(exc))
            summaries[name] = {"error": type(exc).__name__}
    write_json(scn.config, out / "config.json")
    manifest = {
        "package": "epmflux",
        "version": __version__,
        "schema_version": sc.SCHEMA_VERSION,
        "name": scn.name,
        "config_sha256": sc.config_hash(scn.config),
        "seed": scn.seed,
        "backend": nk.BACKEND,
        "tolerances": scn.tolerances,
        "tasks": [j if isinstance(j, str) else j["task"] for j in scn.config["tasks"]],
        "summaries": summaries,
        "assertions": rec.items,
        "n_assertions": len(rec.items),
        "n_failed": sum(not a["passed"] for a in rec.items),
        "all_passed": rec.all_passed,
    }
    manifest["artifacts"] = sorted(p.name for p in out.iterdir() if p.name != "manifest.json") + ["manifest.json"]
    write_json(manifest, out / "manifest.json")
    if not rec.all_passed:
        failed = [f"{a['task']}.{a['name']}" for a in rec.items if not a["passed"]]
        raise AssertionFailure(f"{len(failed)} assertion(s) failed: {', '.join(failed)}")
    return manifest


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _flatten(summaries: dict) -> dict:
    flat = {}
    for task, vals in summaries.items():
        for key, v in vals.items():
            flat[f"{task}.{key}"] = v
    return flat


def run_sweep(config: dict, param: str, values: list, out_root: Path, seed: Optional[int] = None,
              tol_identity: Optional[float] = None, tol_row: Optional[float] = None, threads: int = 1) -> dict:
    """Run the scenario once per value and merge the per-point summaries into one CSV."""
    variants = [sc.set_parameter(config, param, v) for v in values]
    for v in variants:
        sc.validate(v)
    name = config.get("name", "scenario")
    root = Path(out_root) / name / f"sweep_{param}"
    root.mkdir(parents=True, exist_ok=True)

    def one(item):
        idx, cfg = item
        point_dir = root / f"point_{idx:03d}"
        try:
            return run_scenario(cfg, out_root, seed, tol_identity, tol_row, threads=1, out_dir=point_dir)
        except AssertionFailure:
            with open(point_dir / "manifest.json") as fh:
                return json.load(fh)

    manifests = ordered_map(one, list(enumerate(variants)), threads)
    flats = [_flatten(m["summaries"]) for m in manifests]
    keys = sorted({k for f in flats for k, v in f.items() if not isinstance(v, (dict, list))})
    rows = [[v, m["all_passed"], m["n_failed"], *(f.get(k) for k in keys)] for v, m, f in zip(values, manifests, flats)]
    write_csv(root / "sweep.csv", [param, "all_passed", "n_failed", *keys], rows)
    merged = {
        "name": name,
        "parameter": param,
        "values": values,
        "config_sha256": sc.config_hash(config),
        "points": [{"value": v, "dir": f"point_{i:03d}", "config_sha256": m["config_sha256"],
                    "all_passed": m["all_passed"], "n_failed": m["n_failed"]}
                   for i, (v, m) in enumerate(zip(values, manifests))],
        "all_passed": all(m["all_passed"] for m in manifests),
    }
    write_json(merged, root / "manifest.json")
    if not merged["all_passed"]:
        raise AssertionFailure(f"sweep over {param}: some points failed")
    return merged


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epmflux", description="End-point-measurement fluctuation theorem checks.")
    ap.add_argument("--version", action="version", version=f"epmflux {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="scenario JSON file")
        p.add_argument("--out", default="out", help="output root directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--tol-identity", type=float, default=None, help="Jarzynski identity tolerance")
        p.add_argument("--tol-row", type=float, default=None, help="row-wise decomposition tolerance")

    common(sub.add_parser("run", help="run a scenario"))
    sw = sub.add_parser("sweep", help="sweep one scenario parameter")
    common(sw)
    sw.add_argument("--param", required=True, help="parameter name or dotted path, e.g. initial_state.p")
    sw.add_argument("--values", required=True, nargs="+", help="values (parsed as JSON where possible)")
    for fig in ("fig2", "fig3"):
        common(sub.add_parser(fig, help=f"coherence sweep data for {fig}"), config=False)
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = thread_count()
        if args.command == "run":
            manifest = run_scenario(sc.load(args.config), Path(args.out), args.seed, args.tol_identity,
                                    args.tol_row, threads)
            print(f"{manifest['name']}: {manifest['n_assertions']} assertions passed")
        elif args.command == "sweep":
            values = [_parse_value(v) for v in args.values]
            merged = run_sweep(sc.load(args.config), args.param, values, Path(args.out), args.seed,
                               args.tol_identity, args.tol_row, threads)
            print(f"{merged['name']}: sweep over {args.param} passed at {len(values)} points")
        else:
            manifest = run_scenario(sc.figure_config(args.command), Path(args.out), args.seed, args.tol_identity,
                                    args.tol_row, threads)
            print(f"{manifest['name']}: {manifest['n_assertions']} assertions passed")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AssertionFailure as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
