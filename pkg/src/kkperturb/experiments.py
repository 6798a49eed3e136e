"""Batch execution of scenarios and aggregation of their reports."""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .algebra import op_norm
from .basic_construction import build_basic_construction
from .errors import InvalidConfig, KKError, NumericalFailure
from .expectation import trace_expectation
from .factorization import FactorizationConfig, RowElement, search_length2
from .metrics import LinearMap, MetricConfig, kk_distance, map_norm, row_distance, row_norm_of_map
from .perturbation import CHECK_TOL, Check, check_watlem, check_watlem2, perturbation_pipeline, sample_rows
from .scenarios import Scenario, build_instance

CSV_COLUMNS = ("scenario_id", "check_tag", "paper_source", "gamma", "lhs", "rhs", "margin", "pass")

# which scenario toggle each pipeline check belongs to
_SOURCE_GROUP = {
    "Eq-projest": "projest",
    "Lem-homo": "homo",
    "Lem-intertwine": "intertwine",
    "Thm-variant": "variant",
    "Thm-variant-bound": "variant",
    "Thm-rm": "rm-inequality",
}
ROWFACTOR_CONSTANT = 55.0


def similarity_with_condition(n: int, kappa: float, seed: int):
    """Seeded positive ``S`` with ``cond(S) = kappa``: eigenvalues spread over ``[1, kappa]``."""
    rng = np.random.default_rng([seed, 17])
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, _ = np.linalg.qr(z)
    ev = np.linspace(1.0, kappa, n) if n > 1 else np.ones(1)
    return (q * ev) @ q.conj().T


def rowbound_checks(A, conditions, cfg: MetricConfig, n_max: int, seed: int):
    """``||phi||_row <= sqrt(2) ||phi||^2`` for ``phi = Ad(S)`` restricted to ``A``."""
    out = []
    for kappa in conditions:
        s = similarity_with_condition(A.ambient_dim, kappa, seed)
        phi = LinearMap.similarity(A, s)
        norm = map_norm(phi, cfg)
        row = row_norm_of_map(phi, n_max, cfg).lower
        out.append(Check(f"rowbound-cond{kappa:g}", "Lem-rowbound", norm, row, np.sqrt(2) * norm ** 2, slack=1e-6))
    return out


def factorization_checks(A, count: int, cfg: MetricConfig, n_max: int, tol: float):
    """Search length-2 factorisations of random unit-ball rows of ``A``.

    Returns the checks and the per-row log ``(width, success, ratio, residual)``.
    """
    rng = np.random.default_rng([cfg.seed, 19])
    log = []
    worst_res, worst_ratio = 0.0, 0.0
    for m in range(1, n_max + 1):
        for k, x in enumerate(sample_rows(A, m, count, rng)):
            entries = np.array([x[:, j * A.ambient_dim:(j + 1) * A.ambient_dim] for j in range(m)])
            res = search_length2(RowElement(entries, A), FactorizationConfig(seed=cfg.seed + k, tolerance=tol))
            log.append({"width": m, "success": res.success, "ratio": float(res.ratio), "residual": res.residual})
            if res.success:
                worst_res = max(worst_res, res.residual)
                worst_ratio = max(worst_ratio, res.ratio)
    checks = [
        Check("factorization-residual", "Def-factordef", 0.0, worst_res, tol),
        Check("factorization-ratio", "Thm-rowfactor", 0.0, worst_ratio, ROWFACTOR_CONSTANT, slack=0.0),
    ]
    return checks, log


def _f(x):
    return None if x is None else float(x)


def _report_skeleton(scn: Scenario):
    return {
        "scenario_id": scn.id,
        "preset": scn.preset,
        "seed": int(scn.seed),
        "epsilon": float(scn.epsilon),
        "status": "ok",
        "error": None,
        "error_kind": None,
        "warnings": [],
        "brackets": {},
        "pipeline": {},
        "lemmas": {},
        "factorization": [],
        "checks": [],
        "wall_time": 0.0,
    }


def run_scenario(scn: Scenario, tolerance: float = CHECK_TOL, n_max: int = 4, seed: int | None = None) -> dict:
    """Execute the requested checks of one scenario; errors are recorded, not raised."""
    start = time.perf_counter()
    rep = _report_skeleton(scn)
    try:
        _run(scn, rep, tolerance, n_max, seed)
    except NumericalFailure as exc:
        rep.update(status="error", error=f"{type(exc).__name__}: {exc}", error_kind="numerical")
    except KKError as exc:
        rep.update(status="error", error=f"{type(exc).__name__}: {exc}", error_kind="structural")
    rep["wall_time"] = round(time.perf_counter() - start, 3)
    return rep


def _run(scn, rep, tol, n_max, seed):
    inst = build_instance(scn)
    overrides = {"amplification_cutoff": n_max}
    if seed is not None:
        overrides["seed"] = seed
    try:
        cfg = scn.metric_config(**overrides)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc), field="metric") from None
    rep["seed"] = int(cfg.seed)
    toggles = set(scn.checks)
    checks = []
    kk = kk_distance(inst.A, inst.B, cfg)
    row = row_distance(inst.A, inst.B, cfg, n_max)
    rep["brackets"] = {
        "kk": [float(kk.lower), float(kk.upper)],
        "row": [float(row.lower), float(row.upper)],
        "row_per_n": [[int(n), float(lo), float(up)] for n, lo, up in row.details.get("per_n", [])],
    }
    if inst.u0 is not None:
        rep["brackets"]["u0_deviation"] = op_norm(inst.u0 - np.eye(scn.ambient_dim))
    e_b = trace_expectation(inst.D, inst.B)
    if "watlem" in toggles:
        w = check_watlem(inst.A, inst.B, e_b, cfg, gamma=row.upper, m_max=n_max)
        rep["lemmas"]["watlem"] = {"idempotence": w.idempotence, "row": w.row_identity, "column": w.column_identity}
        checks += w.checks
    if "watlem2" in toggles:
        w2 = check_watlem2(e_b, build_basic_construction(e_b), cfg, m_max=n_max, tol=tol)
        rep["lemmas"]["watlem2"] = {"samples": w2.samples, "row_discrepancy": w2.row_discrepancy,
                                    "column_discrepancy": w2.column_discrepancy}
        checks += w2.checks
    if toggles & set(_SOURCE_GROUP.values()):
        pr = perturbation_pipeline(inst.C, inst.A, inst.B, inst.D, cfg, tol, kk=kk, row=row)
        rep["warnings"] = list(pr.warnings)
        rep["pipeline"] = {
            "gamma_used": _f(pr.gamma_used),
            "gamma_kk": _f(pr.gamma_kk),
            "t_deviation": _f(pr.t_deviation),
            "q_commutant_residual": _f(pr.q_commutant_residual),
            "w_deviation": _f(pr.w_deviation),
            "phi_hom_residual": _f(pr.phi_hom_residual),
            "phi_fixes_C_residual": _f(pr.phi_fixes_C_residual),
            "phi_row_deviation": _f(pr.phi_row_deviation),
            "s_invertibility": _f(pr.s_invertibility),
            "u_deviation": _f(pr.u_deviation),
            "conjugation_residual": _f(pr.conjugation_residual),
            "conjugation_verdict": bool(pr.conjugation_verdict),
            "bound_satisfied": bool(pr.bound_satisfied),
            "bound_used": pr.bound_used,
        }
        checks += [c for c in pr.checks if _SOURCE_GROUP.get(c.source) in toggles]
        if pr.error is not None:
            rep.update(status="error", error=pr.error, error_kind=pr.error_kind)
    if "rowbound" in toggles:
        checks += rowbound_checks(inst.A, scn.rowbound_conditions, cfg, n_max, cfg.seed)
    if "factorization" in toggles:
        fc, log = factorization_checks(inst.A, scn.factor_rows, cfg, n_max, tol)
        checks += fc
        rep["factorization"] = log
    rep["checks"] = [c.as_dict() for c in checks]


def run_batch(scenarios, tolerance=CHECK_TOL, n_max=4, seed=None, jobs=1):
    """Run scenarios, in parallel processes when ``jobs > 1``; output order follows input order."""
    args = [(s, tolerance, n_max, seed) for s in scenarios]
    if jobs <= 1 or len(scenarios) <= 1:
        return [run_scenario(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_star_run, args))


def _star_run(a):
    return run_scenario(*a)


def report_passed(rep: dict) -> bool:
    return rep["status"] == "ok" and all(c["pass"] for c in rep["checks"] if c.get("asserted", True))


def batch_exit_code(reports) -> int:
    """0 all asserted bounds pass, 1 some bound fails, 3 a numerical failure occurred."""
    if any(r["error_kind"] == "numerical" for r in reports):
        return 3
    if any(r["error_kind"] == "structural" for r in reports):
        return 2
    return 0 if all(report_passed(r) for r in reports) else 1


def dump_reports(reports) -> str:
    return yaml.safe_dump({"reports": reports}, sort_keys=False, width=120)


def parse_reports(text: str, source: str = "<report>"):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise InvalidConfig(f"{source}: unreadable report", line=mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("reports"), list):
        raise InvalidConfig(f"{source}: expected a 'reports' list", field="reports")
    return doc["reports"]


def aggregate_rows(reports):
    """One row per (scenario, check), sorted stably by scenario id."""
    rows = []
    for rep in reports:
        for c in rep.get("checks", []):
            rows.append({
                "scenario_id": rep["scenario_id"],
                "check_tag": c["check_tag"],
                "paper_source": c["paper_source"],
                "gamma": c["gamma"],
                "lhs": c["lhs"],
                "rhs": c["rhs"],
                "margin": c["margin"],
                "pass": bool(c["pass"]),
            })
        if rep.get("status") == "error":
            rows.append({
                "scenario_id": rep["scenario_id"],
                "check_tag": "error",
                "paper_source": rep.get("error_kind") or "",
                "gamma": float("nan"),
                "lhs": float("nan"),
                "rhs": float("nan"),
                "margin": float("nan"),
                "pass": False,
            })
    rows.sort(key=lambda r: str(r["scenario_id"]))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else str(v).lower() if isinstance(v, bool)
                             else v) for k, v in r.items()})
    return buf.getvalue()


def summarise(rows) -> list[str]:
    """Worst margin and failure count per check tag."""
    worst: dict = {}
    for r in rows:
        tag = r["check_tag"]
        m, fails = worst.get(tag, (np.inf, 0))
        margin = r["margin"] if np.isfinite(r["margin"]) else -np.inf
        worst[tag] = (min(m, margin), fails + (not r["pass"]))
    lines = [f"{tag}: worst margin {m:.3e}, failures {f}" for tag, (m, f) in sorted(worst.items())]
    failed = sum(not r["pass"] for r in rows)
    lines.append(f"total rows {len(rows)}, failing {failed}")
    return lines
