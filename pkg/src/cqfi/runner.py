"""Experiment driver: config in, data tables and an inequality audit out.

Every output byte depends only on the config (including its master seed):
tables use 17 significant digits and ``audit.json`` carries no timing data.
Wall-clock time is reported on the returned :class:`RunReport` only.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import ExperimentConfig
from .geometry import INEQUALITY_SLACK, summarize_hierarchy
from .jumps import trajectory_rng
from .models import (
    DrivenQubitParams,
    GaussianState,
    ThermalFieldSensorParams,
    build_driven_qubit,
    driven_qubit_initial_state,
    driven_qubit_rwa_hamiltonian,
    gaussian_cqfi,
    gaussian_cqfi_operator,
    gaussian_qfi,
    temperature_for_occupation,
    thermal_sensor_closed_forms,
)
from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z
from .oracles import (
    CLOSED_FORM_TOL,
    GAUSSIAN_REL_TOL,
    SLOPE_TOL,
    gaussian_oracle,
    loglog_slope,
    sfi_bound_oracle,
    thermal_sensor_numeric,
    thermal_sensor_oracle,
)
from .pipeline import DrivenRunResult, run_driven

log = logging.getLogger(__name__)

CRITERIA = {
    1: "cqfi_qfi_convergence",
    2: "cross_term_vanishing",
    3: "negative_cross_term",
    4: "trajectory_geometry",
    5: "speed_limit_hierarchy",
    6: "observable_speed_limits",
    7: "thermal_sensor_closed_forms",
    8: "gaussian_outcome_independence",
    9: "sfi_below_conditional_qfi",
    10: "ensemble_reconstruction",
}
# which criteria each experiment produces from its own data
HARD_CRITERIA = {
    "driven_qubit": (1, 2, 3, 4, 5, 6, 10),
    "field_sensing": (7,),
    "gaussian_force": (8,),
}
ORACLE_DRAWS = {7: 50, 8: 100, 9: 10_000}
LARGE_ENSEMBLE = 50_000
CROSS_SEM_FACTOR = 4.0
CROSS_FRACTION = 0.99
NEGATIVE_FRACTION = 0.01
SEM_RATIO_TOL = 0.2
ACTION_GAP = 0.05
RECONSTRUCTION_FACTOR = 5.0
RATE_ZERO_TOL = 1e-9


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def read_table(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {name: body[:, k] for k, name in enumerate(header)}


def _clean(x: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


@dataclass
class Check:
    id: int
    name: str
    scope: str  # "run", "oracle" or "not_applicable"
    hard: bool
    passed: bool | None
    margin: float | None = None
    stat_error: float | None = None
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return _clean(self.__dict__)


@dataclass
class RunReport:
    config: dict[str, Any]
    config_hash: str
    experiment: str
    checks: list[Check]
    rng: dict[str, Any]
    output_dir: Path
    wall_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def audit_dict(self) -> dict[str, Any]:
        return _clean({
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": self.config_hash,
            "rng": self.rng,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        })


# ---------------------------------------------------------------------------
# criteria evaluated on a driven-qubit run


def convergence_window(times: np.ndarray, gamma0: float) -> np.ndarray:
    """Grid points with ``t >= 5/gamma0``; all ``t > 0`` if that window is empty."""
    mask = times >= (5.0 / gamma0 if gamma0 > 0 else 0.0) - 1e-12
    return mask if mask.any() else times > 0


def check_convergence(times, fisher, mean_f, n_trajs: int, gamma0: float) -> Check:
    mask = convergence_window(times, gamma0) & (fisher > 0)
    tol = 0.01 if n_trajs >= LARGE_ENSEMBLE else 0.03
    if not mask.any():
        return Check(1, CRITERIA[1], "run", True, False, detail={"reason": "F_Q vanishes on the window"})
    gap = float(np.mean(np.abs(mean_f[mask] - fisher[mask]) / fisher[mask]))
    positive = fisher > 0
    gap_all = float(np.mean(np.abs(mean_f[positive] - fisher[positive]) / fisher[positive]))
    return Check(
        1, CRITERIA[1], "run", True, gap <= tol, tol - gap,
        detail={"relative_gap": gap, "tolerance": tol, "window_points": int(mask.sum()),
                "window_start": float(times[mask][0]), "relative_gap_full_grid": gap_all},
    )


def check_cross_vanishing(mean_cross, sem_cross, sem_quarter) -> Check:
    ok = np.abs(mean_cross) <= CROSS_SEM_FACTOR * sem_cross + 1e-300
    frac = float(np.mean(ok))
    both = (sem_cross > 0) & (sem_quarter > 0) & np.isfinite(sem_quarter)
    detail = {"fraction_within_4sem": frac}
    margin = frac - CROSS_FRACTION
    passed = frac >= CROSS_FRACTION
    if both.any():
        ratio = float(np.median(sem_quarter[both] / sem_cross[both]))
        detail["sem_ratio_quarter_to_full"] = ratio
        margin = min(margin, SEM_RATIO_TOL - abs(ratio / 2.0 - 1.0))
        passed = passed and abs(ratio / 2.0 - 1.0) <= SEM_RATIO_TOL
    else:
        detail["sem_ratio_quarter_to_full"] = None
    return Check(2, CRITERIA[2], "run", True, passed, margin, float(np.max(sem_cross)), detail)


def driven_checks(res: DrivenRunResult, params: dict[str, Any], is_rwa: bool) -> list[Check]:
    a, n = res.audit, res.n_trajs
    times, fisher = res.times, res.ensemble.fisher
    checks = [check_convergence(times, fisher, res.mean_f, n, params["gamma0"])]
    checks.append(check_cross_vanishing(res.mean_cross, res.sem_cross, res.sem_cross_quarter))

    frac_neg = a.negative_cross / a.samples
    checks.append(Check(3, CRITERIA[3], "run", True, frac_neg >= NEGATIVE_FRACTION, frac_neg - NEGATIVE_FRACTION,
                        detail={"fraction": frac_neg, "threshold": res.negative_cross_threshold}))

    geo_ok = a.min_cs_margin >= -INEQUALITY_SLACK and a.min_delta >= -INEQUALITY_SLACK and a.ratio_violations == 0
    checks.append(Check(4, CRITERIA[4], "run", True, geo_ok, min(a.min_cs_margin, a.min_delta) + INEQUALITY_SLACK,
                        detail={"min_j_minus_ell_sq": a.min_cs_margin, "min_delta": a.min_delta,
                                "ratio_violations": a.ratio_violations}))

    L, J = res.length, res.action
    if n >= 2:
        h = summarize_hierarchy(J[-1], L[-1], res.final_ell, res.final_j)
        ok = h.action_ge_length_sq and h.length_sq_ge_var and h.action_gap <= ACTION_GAP
        margin = min(h.action - h.length_sq + INEQUALITY_SLACK,
                     h.length_sq - h.var_length + 3.0 * h.var_length_se, ACTION_GAP - h.action_gap)
        checks.append(Check(5, CRITERIA[5], "run", True, ok, margin, h.mean_action_se,
                            detail={"J": h.action, "L_sq": h.length_sq, "var_ell": h.var_length,
                                    "var_ell_se": h.var_length_se, "mean_j": h.mean_action,
                                    "action_gap": h.action_gap}))
    else:
        checks.append(Check(5, CRITERIA[5], "run", True, False, detail={"reason": "needs at least 2 trajectories"}))

    sp = res.speed_ensemble
    ens_point, ens_int = sp.pointwise_violations(), sp.integral_violations()
    max_rate = float(np.max(np.abs(sp.rate)))
    ok = ens_int == 0 and ens_point == 0 and a.speed_violations == 0 and a.speed_integral_violations == 0
    if is_rwa:
        ok = ok and max_rate <= RATE_ZERO_TOL
    ens_margin = float(np.min(np.where(sp.included, sp.rhs - sp.lhs, np.inf)))
    int_margin = float(np.min(sp.rhs_integral - sp.lhs_integral))
    checks.append(Check(6, CRITERIA[6], "run", True, ok, min(ens_margin, int_margin) + INEQUALITY_SLACK,
                        detail={"ensemble_pointwise_violations": ens_point, "ensemble_integral_violations": ens_int,
                                "ensemble_excluded": sp.excluded_count, "max_abs_ensemble_rate": max_rate,
                                "rate_zero_required": is_rwa, "trajectory_points": a.speed_points,
                                "trajectory_excluded": a.speed_excluded, "trajectory_violations": a.speed_violations,
                                "trajectory_integral_violations": a.speed_integral_violations}))

    bound = RECONSTRUCTION_FACTOR / math.sqrt(n)
    tmax = float(np.max(res.trace_distance))
    checks.append(Check(10, CRITERIA[10], "run", True, tmax <= bound, bound - tmax,
                        detail={"max_trace_distance": tmax, "bound": bound}))
    return checks


def oracle_checks(ids: Sequence[int], seed: int, hard: Sequence[int] = ()) -> list[Check]:
    fns = {7: thermal_sensor_oracle, 8: gaussian_oracle, 9: sfi_bound_oracle}
    out = []
    for cid in ids:
        summary = fns[cid](trajectory_rng(seed, 10**6 + cid), ORACLE_DRAWS[cid])
        passed, margin = summary.pop("passed"), summary.pop("margin")
        out.append(Check(cid, CRITERIA[cid], "oracle", cid in hard, passed, margin, detail=summary))
    return out


# ---------------------------------------------------------------------------
# experiments


OBSERVABLE_MATRICES = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z}


def driven_params(model: dict[str, Any]) -> DrivenQubitParams:
    temp = temperature_for_occupation(model["omega"], model["nbar"]) if model["nbar"] > 0 else 0.0
    return DrivenQubitParams(model["omega"], model["epsilon"], model["gamma0"], temp)


def _write_tables(out: Path, formats, tables: dict[str, tuple[list[str], list]]) -> None:
    if "csv" in formats:
        for name, (header, cols) in tables.items():
            write_table(out / f"{name}.csv", header, cols)
    if "json" in formats:
        blob = {name: {h: [float(x) for x in c] for h, c in zip(header, cols)} for name, (header, cols) in tables.items()}
        (out / "tables.json").write_text(json.dumps(_clean(blob), sort_keys=True) + "\n")


def _run_driven(cfg: ExperimentConfig, out: Path) -> list[Check]:
    m = cfg.model
    params = driven_params(m)
    model = build_driven_qubit(params)
    obs_name = m["observable"]
    O = driven_qubit_rwa_hamiltonian(params) if obs_name == "H_RWA" else OBSERVABLE_MATRICES[obs_name]
    ens = cfg.ensemble
    dump = cfg.output.max_dumped if cfg.output.dump_trajectories else 0
    res = run_driven(model, driven_qubit_initial_state(params), cfg.grid.t_final, cfg.grid.dt,
                     ens.n_trajs, ens.master_seed, O, batch_size=ens.batch_size, dump=dump)
    t, ef, sp = res.times, res.ensemble, res.speed_ensemble
    _write_tables(out, cfg.output.formats, {
        "qfi_timeseries": (["t", "F_Q", "F_IC", "F_C"], [t, ef.fisher, ef.incoherent, ef.coherent]),
        "cqfi_ensemble": (["t", "mean_f", "mean_ic", "mean_coh", "mean_cross", "sem_cross"],
                          [t, res.mean_f, res.mean_ic, res.mean_coh, res.mean_cross, res.sem_cross]),
        "geometry": (["t", "L", "J", "mean_ell", "mean_j", "var_ell"],
                     [t, res.length, res.action, res.mean_ell, res.mean_j,
                      np.nan_to_num(res.var_ell, nan=0.0)]),
        "speedlimits": (
            ["t", "ens_lhs", "ens_rhs", "ens_int_lhs", "ens_int_rhs",
             "traj_lhs_mean", "traj_rhs_mean", "traj_int_lhs_mean", "traj_int_rhs_mean"],
            [t, np.where(sp.included, sp.lhs, 0.0), np.where(sp.included, sp.rhs, 0.0), sp.lhs_integral,
             sp.rhs_integral, res.traj_mean_lhs, res.traj_mean_rhs, res.traj_mean_lhs_integral, 2.0 * res.mean_ell]),
        "reconstruction": (["t", "trace_distance", "bound"],
                           [t, res.trace_distance, np.full_like(t, RECONSTRUCTION_FACTOR / math.sqrt(ens.n_trajs))]),
    })
    if res.dumped:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for tr in res.dumped:
            tr.to_csv(tdir / f"trajectory_{tr.index:06d}.csv")
    return driven_checks(res, m, obs_name == "H_RWA")


def _run_field_sensing(cfg: ExperimentConfig, out: Path) -> list[Check]:
    m = cfg.model
    thetas = np.linspace(m["theta_min"], m["theta_max"], m["n_theta"])
    cols: dict[str, list[float]] = {k: [] for k in (
        "theta", "p_plus", "p_minus", "f_ic_plus", "f_ic_minus", "f_c",
        "p_plus_num", "p_minus_num", "f_ic_plus_num", "f_ic_minus_num", "f_c_num")}
    worst = 0.0
    for th in thetas:
        p = ThermalFieldSensorParams(m["delta"], float(th), m["beta"])
        ref, num = thermal_sensor_closed_forms(p), thermal_sensor_numeric(p)
        row_ref = [ref.p_plus, ref.p_minus, ref.f_ic_plus, ref.f_ic_minus, ref.f_c]
        row_num = [num["p_plus"], num["p_minus"], num["f_ic_plus"], num["f_ic_minus"], num["f_c_plus"]]
        worst = max(worst, max(abs(x - y) for x, y in zip(row_ref, row_num)), abs(num["f_c_minus"] - ref.f_c))
        for k, v in zip(cols, [float(th), *row_ref, *row_num]):
            cols[k].append(v)
    _write_tables(out, cfg.output.formats, {"field_sensing": (list(cols), [np.array(v) for v in cols.values()])})
    [oracle] = oracle_checks([7], cfg.ensemble.master_seed, hard=[7])
    oracle.scope = "run"
    oracle.detail["sweep_max_abs_error"] = worst
    oracle.passed = bool(oracle.passed and worst <= CLOSED_FORM_TOL)
    oracle.margin = min(oracle.margin, CLOSED_FORM_TOL - worst)
    return [oracle]


def _run_gaussian(cfg: ExperimentConfig, out: Path) -> list[Check]:
    m = cfg.model
    state = GaussianState((m["mean_x"], m["mean_p"]), m["vx"], m["vp"], m["vxp"])
    n = int(round(cfg.grid.t_final / cfg.grid.dt))
    ts = cfg.grid.dt * np.arange(1, n + 1)
    alphas = m["alphas"]
    header = ["t", "F_Q"] + [f"cqfi_{k}" for k in range(len(alphas))] + [f"cqfi_operator_{k}" for k in range(len(alphas))]
    fq = np.array([gaussian_qfi(state, t) for t in ts])
    cq = [np.array([gaussian_cqfi(state, t, m["strength"], a) for t in ts]) for a in alphas]
    co = [np.array([gaussian_cqfi_operator(state, t, m["strength"], a) for t in ts]) for a in alphas]
    _write_tables(out, cfg.output.formats, {"gaussian_force": (header, [ts, fq, *cq, *co])})
    worst = max(float(np.max(np.abs(c - fq) / fq)) for c in cq)
    slope = loglog_slope(ts, fq) if len(ts) > 1 else 2.0
    [oracle] = oracle_checks([8], cfg.ensemble.master_seed, hard=[8])
    oracle.scope = "run"
    oracle.detail.update({"sweep_max_rel_error": worst, "sweep_slope": slope, "alphas": list(alphas)})
    ok = worst <= GAUSSIAN_REL_TOL and abs(slope - 2.0) <= SLOPE_TOL
    oracle.passed = bool(oracle.passed and ok)
    oracle.margin = min(oracle.margin, GAUSSIAN_REL_TOL - worst, SLOPE_TOL - abs(slope - 2.0))
    return [oracle]


RUNNERS = {"driven_qubit": _run_driven, "field_sensing": _run_field_sensing, "gaussian_force": _run_gaussian}


def run(cfg: ExperimentConfig) -> RunReport:
    """Run one experiment, write its tables and ``audit.json``, and return the report."""
    start = _time.perf_counter()
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %s into %s", cfg.experiment, out)
    checks = RUNNERS[cfg.experiment](cfg, out)
    hard = HARD_CRITERIA[cfg.experiment]
    have = {c.id for c in checks}
    # remaining criteria: exact oracles are cheap and always evaluated (informational
    # here); run-level criteria of other experiments are marked not applicable
    checks += oracle_checks([c for c in (7, 8, 9) if c not in have], cfg.ensemble.master_seed)
    have = {c.id for c in checks}
    checks += [Check(c, CRITERIA[c], "not_applicable", False, None) for c in CRITERIA if c not in have]
    checks.sort(key=lambda c: c.id)
    for c in checks:
        c.hard = c.id in hard
    report = RunReport(
        config=cfg.to_dict(),
        config_hash=cfg.content_hash(),
        experiment=cfg.experiment,
        checks=checks,
        rng={"bit_generator": "Philox", "seeding": "SeedSequence(master_seed, spawn_key=(index,))",
             "master_seed": cfg.ensemble.master_seed, "numpy": np.__version__,
             "python": platform.python_version()},
        output_dir=out,
    )
    (out / "audit.json").write_text(json.dumps(report.audit_dict(), indent=2, sort_keys=True) + "\n")
    report.wall_seconds = _time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# re-audit from emitted files


def audit_directory(run_dir: str | Path) -> list[Check]:
    """Re-check the inequalities that are recoverable from a run directory's tables.

    Per-trajectory statistics that are not tabulated (criteria 3 and 4, the
    trajectory parts of 6) are re-evaluated from the recorded summaries.
    """
    d = Path(run_dir)
    recorded = json.loads((d / "audit.json").read_text())
    cfg = recorded["config"]
    by_id = {c["id"]: c for c in recorded["checks"]}
    checks: list[Check] = []
    exp = recorded["experiment"]

    def from_record(cid: int, ok: bool, margin=None) -> Check:
        rec = by_id[cid]
        return Check(cid, rec["name"], rec["scope"], cid in HARD_CRITERIA[exp], ok, margin, detail=rec["detail"])

    if exp == "driven_qubit":
        q, c = read_table(d / "qfi_timeseries.csv"), read_table(d / "cqfi_ensemble.csv")
        g, s = read_table(d / "geometry.csv"), read_table(d / "speedlimits.csv")
        r = read_table(d / "reconstruction.csv")
        n = cfg["ensemble"]["n_trajs"]
        checks.append(check_convergence(q["t"], q["F_Q"], c["mean_f"], n, cfg["model"]["gamma0"]))
        frac = float(np.mean(np.abs(c["mean_cross"]) <= CROSS_SEM_FACTOR * c["sem_cross"] + 1e-300))
        rec2 = by_id[2]["detail"].get("sem_ratio_quarter_to_full")
        ok2 = frac >= CROSS_FRACTION and (rec2 is None or abs(float(rec2) / 2.0 - 1.0) <= SEM_RATIO_TOL)
        checks.append(Check(2, CRITERIA[2], "run", True, ok2, frac - CROSS_FRACTION, detail={"fraction_within_4sem": frac}))
        det3 = by_id[3]["detail"]
        checks.append(from_record(3, float(det3["fraction"]) >= NEGATIVE_FRACTION))
        det4 = by_id[4]["detail"]
        ok4 = (float(det4["min_j_minus_ell_sq"]) >= -INEQUALITY_SLACK and float(det4["min_delta"]) >= -INEQUALITY_SLACK
               and det4["ratio_violations"] == 0 and bool(np.all(g["J"] >= g["L"] ** 2 - INEQUALITY_SLACK)))
        checks.append(from_record(4, ok4))
        det5 = by_id[5]["detail"]
        ok5 = (g["J"][-1] >= g["L"][-1] ** 2 - INEQUALITY_SLACK
               and g["L"][-1] ** 2 >= g["var_ell"][-1] - 3.0 * float(det5.get("var_ell_se", 0.0))
               and abs(g["mean_j"][-1] - g["J"][-1]) <= ACTION_GAP * g["J"][-1])
        checks.append(from_record(5, bool(ok5)))
        det6 = by_id[6]["detail"]
        ok6 = (bool(np.all(s["ens_lhs"] <= s["ens_rhs"] + INEQUALITY_SLACK))
               and bool(np.all(s["ens_int_lhs"] <= s["ens_int_rhs"] + INEQUALITY_SLACK))
               and bool(np.all(s["traj_lhs_mean"] <= s["traj_rhs_mean"] + INEQUALITY_SLACK))
               and bool(np.all(s["traj_int_lhs_mean"] <= s["traj_int_rhs_mean"] + INEQUALITY_SLACK))
               and det6["trajectory_violations"] == 0 and det6["trajectory_integral_violations"] == 0
               and (not det6["rate_zero_required"] or float(det6["max_abs_ensemble_rate"]) <= RATE_ZERO_TOL))
        checks.append(from_record(6, ok6))
        ok10 = bool(np.all(r["trace_distance"] <= r["bound"]))
        checks.append(from_record(10, ok10, float(np.min(r["bound"] - r["trace_distance"]))))
    elif exp == "field_sensing":
        f = read_table(d / "field_sensing.csv")
        worst = max(float(np.max(np.abs(f[k] - f[k + "_num"]))) for k in ("p_plus", "p_minus", "f_ic_plus", "f_ic_minus", "f_c"))
        checks.append(from_record(7, worst <= CLOSED_FORM_TOL and bool(by_id[7]["passed"]), CLOSED_FORM_TOL - worst))
    else:
        f = read_table(d / "gaussian_force.csv")
        cq = [f[k] for k in f if k.startswith("cqfi_") and not k.startswith("cqfi_operator")]
        worst = max(float(np.max(np.abs(c - f["F_Q"]) / f["F_Q"])) for c in cq)
        slope = loglog_slope(f["t"], f["F_Q"]) if len(f["t"]) > 1 else 2.0
        ok = worst <= GAUSSIAN_REL_TOL and abs(slope - 2.0) <= SLOPE_TOL and bool(by_id[8]["passed"])
        checks.append(from_record(8, ok, GAUSSIAN_REL_TOL - worst))
    for c in checks:
        c.passed = bool(c.passed)
    return checks
