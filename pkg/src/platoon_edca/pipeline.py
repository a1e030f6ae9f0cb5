"""Headway sweep: stability bound, traffic load, analytic delay, fits and optional simulation.

Every stage runs per grid cell; a failing cell is recorded with its error
and the remaining cells carry on.  Cells are independent, so they may run
in a process pool; results are collected in grid order and each CSV is
written atomically once all cells are done, so output bytes never depend
on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analytic import delay_pgf, solve_fixed_point
from .config import ScenarioConfig
from .des import SimConfig, replicate, write_manifest, write_packet_csv
from .edca import contender_count
from .errors import PlatoonEdcaError
from .fitting import cdf_fit, headway_rate_regression, reliability
from .platoon import PlatoonModel, critical_delay, equilibrium, packet_delay_budget
from .traffic import GapModelParams, RateModel, gap_probability, lambda0

FIG2 = "fig2_critical_delay.csv"
FIG3 = "fig3_mean_delay.csv"
FIG4 = "fig4_std.csv"
FIG5 = "fig5_cdf.csv"
FIG7 = "fig7_reliability_fvd.csv"
FIG8 = "fig8_reliability_movm.csv"
TABLE5 = "table5_regression.csv"
GAP = "gap_rates.csv"
DES_SUMMARY = "des_comparison.csv"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".12g")
    return str(v)


def _error_text(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")


@dataclass
class BoundRecord:
    model: str
    headway: float
    v0: float | None = None
    v_prime: float | None = None
    d_tilde: float | None = None
    tau_cr: float | None = None
    budget: float | None = None
    error: str = ""


@dataclass
class AcRecord:
    ac: int
    mean_ms: float | None = None
    std_ms: float | None = None
    fit_rate: float | None = None
    fit_rms: float | None = None
    reliability: dict = field(default_factory=dict)  # model -> (exact, fitted)
    pmf: tuple | None = None  # (delays_us, probs)
    error: str = ""


@dataclass
class CellRecord:
    headway: float
    rate_model: str
    gap_p: float | None = None
    lambda0: float | None = None
    n_cs: int | None = None
    omegas: tuple | None = None
    pbs: tuple | None = None
    rhos: tuple | None = None
    saturated: tuple | None = None
    iterations: int | None = None
    acs: list[AcRecord] = field(default_factory=list)
    error: str = ""
    error_kind: str = ""


@dataclass
class DesRecord:
    headway: float
    rate_model: str
    n_vehicles: int
    n_reps: int
    metrics: dict = field(default_factory=dict)
    error: str = ""


@dataclass
class ScenarioResult:
    config_hash: str
    bounds: list[BoundRecord]
    cells: list[CellRecord]
    regressions: list[dict]
    des: list[DesRecord]
    files: list[str]

    @property
    def failures(self) -> list[str]:
        out = [f"{b.model} y*={b.headway}: {b.error}" for b in self.bounds if b.error]
        out += [f"{c.rate_model} y*={c.headway}: {c.error}" for c in self.cells if c.error]
        out += [f"{c.rate_model} y*={c.headway} AC{a.ac}: {a.error}" for c in self.cells for a in c.acs if a.error]
        out += [f"DES {d.rate_model} y*={d.headway}: {d.error}" for d in self.des if d.error]
        return out


def _l_value(cfg: ScenarioConfig, model: str) -> float:
    return cfg.platoon.l_fvd if model == "fvd" else 0.0


def compute_bound(cfg: ScenarioConfig, model: str, headway: float) -> BoundRecord:
    rec = BoundRecord(model=model, headway=headway)
    pl = cfg.platoon
    try:
        m = PlatoonModel(a=pl.a, l=_l_value(cfg, model), lead_speed=pl.lead_speed)
        m = m.with_equilibrium(headway, pl.y_m, pl.y_tilde)
        eq = equilibrium(m, headway)
        rec.v0, rec.v_prime, rec.d_tilde = m.ovf.v0, eq.v_prime, eq.d_tilde
        rec.tau_cr = critical_delay(m, eq)
        rec.budget = packet_delay_budget(rec.tau_cr, cfg.delay_budget_fraction)
    except (PlatoonEdcaError, ValueError, ArithmeticError) as exc:
        rec.error = _error_text(exc)
    return rec


def compute_cell(cfg: ScenarioConfig, headway: float, rate_kind: str, budgets: dict) -> CellRecord:
    """Analytic stage for one (headway, rate model) cell; ``budgets`` maps model name to seconds."""
    rec = CellRecord(headway=headway, rate_model=rate_kind)
    tr, p = cfg.traffic, cfg.edca
    try:
        rec.gap_p = gap_probability(headway, cfg.platoon.lead_speed, GapModelParams(tr.alpha, tr.beta0))
        rec.lambda0 = lambda0(rec.gap_p, RateModel(rate_kind, tr.k))
        rec.n_cs = contender_count(headway, p.cs_range)
        sol = solve_fixed_point(rec.lambda0, tr.lambda1, p, rec.n_cs)
    except (PlatoonEdcaError, ValueError, ArithmeticError) as exc:
        rec.error = _error_text(exc)
        rec.error_kind = type(exc).__name__
        return rec
    rec.omegas = (sol.omega0, sol.omega1)
    rec.pbs = (sol.pb0, sol.pb1)
    rec.rhos = (sol.rho0, sol.rho1)
    rec.saturated = sol.saturated
    rec.iterations = sol.iterations
    t_tr = p.ttr_us * 1e-6
    for ac in (0, 1):
        a = AcRecord(ac=ac)
        rec.acs.append(a)
        try:
            dist = delay_pgf(sol, p, ac)
            a.mean_ms, a.std_ms = dist.mean_ms(), dist.std_ms()
            a.pmf = (dist.delays_us.tolist(), dist.probs.tolist())
            fit = cdf_fit(dist, t_tr)
            a.fit_rate, a.fit_rms = fit.rate, fit.rms_error
            for model, budget in budgets.items():
                if budget is None:
                    continue
                r = reliability(budget, dist=dist, fit=fit)
                a.reliability[model] = (r.exact, r.fitted)
        except (PlatoonEdcaError, ValueError, ArithmeticError) as exc:
            a.error = _error_text(exc)
    return rec


def compute_des(cfg: ScenarioConfig, headway: float, rate_kind: str) -> tuple[DesRecord, list]:
    tr, ds = cfg.traffic, cfg.des
    n = ds.n_vehicles or contender_count(headway, cfg.edca.cs_range)
    rec = DesRecord(headway=headway, rate_model=rate_kind, n_vehicles=n, n_reps=ds.n_reps)
    try:
        p_gap = gap_probability(headway, cfg.platoon.lead_speed, GapModelParams(tr.alpha, tr.beta0))
        sim = SimConfig(
            n_vehicles=n, headway=headway, edca=cfg.edca, lambda0=lambda0(p_gap, RateModel(rate_kind, tr.k)),
            lambda1=tr.lambda1, seed=cfg.seed, duration=ds.duration, warmup=ds.warmup, topology=ds.topology,
        )
        agg = replicate(sim, ds.n_reps)
    except (PlatoonEdcaError, ValueError, ArithmeticError) as exc:
        rec.error = _error_text(exc)
        return rec, []
    rec.metrics = {k: (m.mean, m.std, m.ci_low, m.ci_high) for k, m in agg.metrics.items()}
    return rec, [(sim, agg)]


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


def _atomic_write(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def _rel(a, b):
    if a is None or b is None or not b:
        return None
    return (a - b) / b


def run_pipeline(
    cfg: ScenarioConfig,
    out_dir=None,
    models=None,
    workers: int | None = None,
    stages: str = "all",
    dump_distributions: bool = True,
) -> ScenarioResult:
    """Run the sweep and write its CSVs into ``out_dir`` (default ``cfg.output_dir``).

    ``stages`` is ``"bounds"`` (stability bound only), ``"analytic"`` (no
    simulation) or ``"all"`` (simulation too when ``des.enabled``).
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = tuple(models) if models else cfg.models
    workers = workers or cfg.workers
    h = cfg.config_hash()
    headways = cfg.sweep.headways()
    files = []

    bounds = _map(compute_bound, [(cfg, m, y) for y in headways for m in models], workers)
    _atomic_write(
        out / FIG2,
        ["config_hash", "model", "headway_m", "v0_mps", "v_prime", "d_tilde", "tau_cr_s", "budget_ms", "error"],
        [[h, b.model, b.headway, b.v0, b.v_prime, b.d_tilde, b.tau_cr, None if b.budget is None else b.budget * 1e3, b.error] for b in bounds],
    )
    files.append(FIG2)
    result = ScenarioResult(config_hash=h, bounds=bounds, cells=[], regressions=[], des=[], files=files)
    if stages == "bounds" or not cfg.rate_models:
        return result

    budget_at = {(b.model, b.headway): b.budget for b in bounds}
    jobs = [
        (cfg, y, rk, {m: budget_at.get((m, y)) for m in models})
        for rk in cfg.rate_models
        for y in headways
    ]
    cells = _map(compute_cell, jobs, workers)
    result.cells = cells

    _atomic_write(
        out / GAP,
        ["config_hash", "headway_m", "rate_model", "gap_probability", "lambda0_pps", "lambda1_pps", "error"],
        [[h, c.headway, c.rate_model, c.gap_p, c.lambda0, cfg.traffic.lambda1, c.error] for c in cells],
    )
    files.append(GAP)

    def ac_rows(cols):
        rows = []
        for c in cells:
            if c.error:
                for ac in (0, 1):
                    rows.append([h, c.headway, c.rate_model, ac] + [None] * len(cols) + [c.error])
                continue
            for a in c.acs:
                rows.append([h, c.headway, c.rate_model, a.ac] + [fn(c, a) for fn in cols.values()] + [a.error])
        return rows

    base = ["config_hash", "headway_m", "rate_model", "ac"]
    fp_cols = {
        "gap_probability": lambda c, a: c.gap_p,
        "lambda0_pps": lambda c, a: c.lambda0,
        "n_cs": lambda c, a: c.n_cs,
        "omega": lambda c, a: c.omegas[a.ac],
        "p_block": lambda c, a: c.pbs[a.ac],
        "rho": lambda c, a: c.rhos[a.ac],
        "rho_clamped": lambda c, a: bool(c.saturated[a.ac]),
        "iterations": lambda c, a: c.iterations,
    }
    mean_cols = {**fp_cols, "mean_delay_ms": lambda c, a: a.mean_ms}
    std_cols = {**fp_cols, "std_delay_ms": lambda c, a: a.std_ms}
    _atomic_write(out / FIG3, base + list(mean_cols) + ["error"], ac_rows(mean_cols))
    _atomic_write(out / FIG4, base + list(std_cols) + ["error"], ac_rows(std_cols))
    shift_ms = cfg.edca.ttr_us * 1e-3
    fit_cols = {
        "shift_ms": lambda c, a: shift_ms,
        "rate_per_ms": lambda c, a: a.fit_rate,
        "fit_rms": lambda c, a: a.fit_rms,
        "mean_delay_ms": lambda c, a: a.mean_ms,
    }
    _atomic_write(out / FIG5, base + list(fit_cols) + ["error"], ac_rows(fit_cols))
    files += [FIG3, FIG4, FIG5]

    for model, name in (("fvd", FIG7), ("movm", FIG8)):
        if model not in models:
            continue
        rel_cols = {
            "budget_ms": lambda c, a, m=model: None if budget_at.get((m, c.headway)) is None else budget_at[(m, c.headway)] * 1e3,
            "reliability_exact": lambda c, a, m=model: a.reliability.get(m, (None, None))[0],
            "reliability_fit": lambda c, a, m=model: a.reliability.get(m, (None, None))[1],
        }
        _atomic_write(out / name, base + list(rel_cols) + ["error"], ac_rows(rel_cols))
        files.append(name)

    regs = []
    for rk in cfg.rate_models:
        for ac in (0, 1):
            pts = [(c.headway, a.fit_rate) for c in cells if c.rate_model == rk and not c.error for a in c.acs if a.ac == ac and a.fit_rate is not None]
            row = {"rate_model": rk, "ac": ac, "n_points": len(pts), "slope": None, "intercept": None, "error": ""}
            try:
                reg = headway_rate_regression([p[0] for p in pts], [p[1] for p in pts])
                row["slope"], row["intercept"] = reg.slope, reg.intercept
            except (PlatoonEdcaError, ValueError) as exc:
                row["error"] = _error_text(exc)
            regs.append(row)
    result.regressions = regs
    _atomic_write(
        out / TABLE5,
        ["config_hash", "rate_model", "ac", "n_points", "slope_per_ms_per_m", "intercept_per_ms", "error"],
        [[h, r["rate_model"], r["ac"], r["n_points"], r["slope"], r["intercept"], r["error"]] for r in regs],
    )
    files.append(TABLE5)

    if dump_distributions:
        ddir = out / "distributions"
        ddir.mkdir(exist_ok=True)
        for c in cells:
            for a in c.acs:
                if a.pmf is None:
                    continue
                name = f"pmf_{c.rate_model}_y{_fmt(c.headway)}_ac{a.ac}.csv"
                _atomic_write(ddir / name, ["config_hash", "delay_us", "pmf"], [[h, d, q] for d, q in zip(*a.pmf)])
                files.append(f"distributions/{name}")

    if stages == "all" and cfg.des.enabled:
        result.des = run_des_stage(cfg, out, cells, workers)
        files.append(DES_SUMMARY)
    return result


def run_des_stage(cfg: ScenarioConfig, out: Path, cells=None, workers: int = 1) -> list[DesRecord]:
    """Replicated simulations, per-packet dumps of the first replication, and analytic deltas."""
    h = cfg.config_hash()
    headways = list(cfg.des.headways) if cfg.des.headways is not None else cfg.sweep.headways()
    rate_models = cfg.rate_models or ("linear",)
    jobs = [(cfg, float(y), rk) for rk in rate_models for y in headways]
    results = _map(compute_des, jobs, workers)
    ddir = out / "des"
    ddir.mkdir(exist_ok=True)
    analytic = {}
    for c in cells or []:
        for a in c.acs:
            analytic[(c.rate_model, c.headway, a.ac)] = (a.mean_ms, a.std_ms)
    rows, recs = [], []
    for rec, runs in results:
        recs.append(rec)
        tag = f"{rec.rate_model}_y{_fmt(rec.headway)}"
        for sim, agg in runs:
            write_packet_csv(agg.runs[0], ddir / f"packets_{tag}.csv")
            write_manifest(sim, ddir / f"manifest_{tag}.txt", {"config_hash": h, "n_reps": rec.n_reps, "seeds": agg.seeds})
        for ac in (0, 1):
            am, asd = analytic.get((rec.rate_model, rec.headway, ac), (None, None))
            mean = rec.metrics.get(f"ac{ac}_mean_ms", (None,) * 4)
            std = rec.metrics.get(f"ac{ac}_std_ms", (None,) * 4)
            samples = rec.metrics.get(f"ac{ac}_samples", (None,) * 4)
            rows.append([
                h, rec.headway, rec.rate_model, ac, rec.n_vehicles, rec.n_reps, samples[0],
                mean[0], mean[2], mean[3], std[0], am, asd, _rel(mean[0], am), _rel(std[0], asd), rec.error,
            ])
    _atomic_write(
        out / DES_SUMMARY,
        ["config_hash", "headway_m", "rate_model", "ac", "n_vehicles", "n_reps", "samples_per_rep",
         "des_mean_ms", "des_mean_ci_low", "des_mean_ci_high", "des_std_ms", "analytic_mean_ms",
         "analytic_std_ms", "rel_delta_mean", "rel_delta_std", "error"],
        rows,
    )
    return recs


def gap_table(cfg: ScenarioConfig, out_dir=None) -> tuple[Path, int]:
    """Gap acceptance probability and AC0 rate per headway and rate model; returns (path, failed rows)."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr, h = cfg.traffic, cfg.config_hash()
    rows = []
    for rk in cfg.rate_models:
        for y in cfg.sweep.headways():
            p_gap = lam = None
            err = ""
            try:
                p_gap = gap_probability(y, cfg.platoon.lead_speed, GapModelParams(tr.alpha, tr.beta0))
                lam = lambda0(p_gap, RateModel(rk, tr.k))
            except (PlatoonEdcaError, ValueError, ArithmeticError) as exc:
                err = _error_text(exc)
            rows.append([h, y, rk, p_gap, lam, tr.lambda1, err])
    _atomic_write(
        out / GAP,
        ["config_hash", "headway_m", "rate_model", "gap_probability", "lambda0_pps", "lambda1_pps", "error"],
        rows,
    )
    return out / GAP, sum(1 for r in rows if r[-1])


def simulate_only(cfg: ScenarioConfig, out_dir=None, workers: int | None = None) -> list[DesRecord]:
    """Simulation stage with analytic reference values, regardless of ``des.enabled``."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    headways = list(cfg.des.headways) if cfg.des.headways is not None else cfg.sweep.headways()
    rate_models = cfg.rate_models or ("linear",)
    cells = _map(compute_cell, [(cfg, float(y), rk, {}) for rk in rate_models for y in headways], workers)
    return run_des_stage(replace(cfg, rate_models=tuple(rate_models)), out, cells, workers)
