"""Monte Carlo experiment runner: scenario -> estimator -> metrics -> reports.

Each trial draws from its own stream ``trial_rng(seed, k)``: first the
phase errors (N uniforms, independent of ``phi_max``), then the snapshot
noise. Runs that differ only in ``phi_max`` therefore share their noise.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from functools import partial
from pathlib import Path

import numpy as np

from ulacal import calib_known, oversampled, rmt, sphericity, toeplitz_recon
from ulacal.errors import DomainError, UlacalError
from ulacal.scenario import (
    CovarianceKind,
    ScenarioConfig,
    build_covariance,
    draw_phase_errors,
    draw_xi,
    generate_snapshots,
    sample_covariance,
    trial_rng,
)


class ExperimentKind(str, Enum):
    LR_PDF = "lr_pdf"
    ML_BENCHMARK = "ml_benchmark"
    INVARIANT = "invariant"
    ADHOC = "adhoc"
    OVERSAMPLED = "oversampled"
    CRB_PROFILE = "crb_profile"


@dataclass(frozen=True)
class ExperimentOptions:
    """Estimator and report options; empty ``align`` picks the per-kind default."""

    align: str = ""
    variant: str = "true"
    n_diags: int = 1
    refine: bool = False
    element_pattern: str = "cosine"
    bins: int = 50

    def __post_init__(self):
        if self.align not in ("",) + calib_known.ALIGN_MODES:
            raise DomainError(f"align must be one of {calib_known.ALIGN_MODES}")
        if self.variant not in ("true", "estimate"):
            raise DomainError("variant must be 'true' or 'estimate'")
        if self.n_diags < 1 or self.bins < 1:
            raise DomainError("n_diags and bins must be >= 1")
        oversampled.ElementPattern(self.element_pattern)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    options: ExperimentOptions = field(default_factory=ExperimentOptions)

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))

    def resolved_align(self):
        if self.options.align:
            return self.options.align
        if self.kind is ExperimentKind.ML_BENCHMARK:
            return "none"
        if self.kind is ExperimentKind.INVARIANT and self.options.variant == "true":
            return "constant"
        return "affine"

    def to_lines(self):
        lines = [f"experiment.kind={self.kind.value}"]
        lines += self.scenario.to_lines("scenario.")
        for f in fields(self.options):
            v = getattr(self.options, f.name)
            if f.name == "align":
                v = self.resolved_align()
            lines.append(f"options.{f.name}={v}")
        return lines


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    columns: list
    records: list
    summary: dict
    histograms: dict = field(default_factory=dict)
    extra_tables: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def write(self, out_dir):
        """Write ``records.csv``, ``summary.json``, ``histogram_*.csv`` and ``resolved.cfg``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_records(out / "records.csv", self.columns, self.records)
        (out / "summary.json").write_text(json.dumps(jsonable(self.summary), indent=2, sort_keys=True) + "\n")
        for name, (edges, counts) in self.histograms.items():
            rows = [{"left": edges[i], "right": edges[i + 1], "count": int(c)} for i, c in enumerate(counts)]
            write_records(out / f"histogram_{name}.csv", ["left", "right", "count"], rows)
        for name, (cols, rows) in self.extra_tables.items():
            write_records(out / f"{name}.csv", cols, rows)
        (out / "resolved.cfg").write_text("\n".join(self.spec.to_lines()) + "\n")


def default_scenario(kind):
    """Scenario defaults per experiment kind."""
    kind = ExperimentKind(kind)
    if kind is ExperimentKind.OVERSAMPLED:
        return ScenarioConfig(covariance_kind=CovarianceKind.SHIFTED_SYMMETRIC, d_over_lambda=0.1, trials=100)
    if kind is ExperimentKind.LR_PDF:
        return ScenarioConfig(phi_max_deg=0.0)
    return ScenarioConfig()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_records(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_records(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def histogram(values, bins, range=None):
    """Counts over ``bins`` equal-width bins; out-of-range values land in the edge bins.

    Returns
    -------
    (edges, counts)
        Empty arrays for empty input.
    """
    if bins < 1:
        raise DomainError("bins must be >= 1")
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return np.array([]), np.array([], dtype=int)
    lo, hi = (v.min(), v.max()) if range is None else range
    if hi <= lo:
        lo, hi = lo - 0.5, lo + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.floor((v - lo) / (hi - lo) * bins).astype(int), 0, bins - 1)
    return edges, np.bincount(idx, minlength=bins)


def residual_columns(N):
    return [f"res_{k}" for k in range(N)]


def summarize_sqrt_second_moment(records):
    """``sqrt(mean r^2)`` over all elements and trials of the ``res_*`` columns, degrees."""
    squares = []
    for r in records:
        res = np.array([float(v) for k, v in r.items() if k.startswith("res_")])
        squares.extend(res[np.isfinite(res)] ** 2)
    # fsum is exactly rounded, so record order cannot change the result
    total, count = math.fsum(squares), len(squares)
    return math.sqrt(total / count) if count else float("nan")


# per-trial workers; module-level so they pickle for the process pool


@dataclass(frozen=True)
class _Context:
    spec: ExperimentSpec
    T_N: np.ndarray
    align: str


def _draw(ctx, k):
    cfg = ctx.spec.scenario
    rng = trial_rng(cfg.seed, k)
    phases = draw_phase_errors(cfg.phi_max_deg, cfg.N, rng)
    return phases, rng


def _residual_record(est, phases, ctx):
    res, rmse = calib_known.align_and_rmse(est, phases, ctx.spec.scenario.d_over_lambda, ctx.align)
    rec = {"rmse_deg": rmse}
    rec.update(zip(residual_columns(phases.size), np.rad2deg(res)))
    return rec


def _trial_ml(ctx, k):
    phases, rng = _draw(ctx, k)
    Y = generate_snapshots(ctx.T_N, phases, ctx.spec.scenario.T, rng)
    est = calib_known.ml_estimate(Y, ctx.T_N, refine=ctx.spec.options.refine)
    rec = _residual_record(est.phases, phases, ctx)
    rec["lambda_min"] = est.diagnostics["lambda_min"]
    return rec


def _trial_invariant(ctx, k):
    phases, rng = _draw(ctx, k)
    R = sample_covariance(generate_snapshots(ctx.T_N, phases, ctx.spec.scenario.T, rng))
    opts = ctx.spec.options
    if opts.variant == "true":
        arg_t = [np.angle(ctx.T_N[0, j]) for j in range(1, opts.n_diags + 1)]
    else:
        arg_t = "estimate"
    est = calib_known.superdiag_estimate(R, arg_t, opts.n_diags)
    return _residual_record(est.phases, phases, ctx)


def _trial_adhoc(ctx, k):
    phases, rng = _draw(ctx, k)
    R = sample_covariance(generate_snapshots(ctx.T_N, phases, ctx.spec.scenario.T, rng))
    est = calib_known.adhoc_estimate(R, ctx.T_N)
    return _residual_record(est.phases, phases, ctx)


def _trial_lr(ctx, k):
    cfg = ctx.spec.scenario
    phases, rng = _draw(ctx, k)
    R = sample_covariance(generate_snapshots(ctx.T_N, phases, cfg.T, rng))
    corr = rmt.mestre_correct(np.linalg.eigvalsh(R), cfg.T)
    Rm = rmt.modify_matrix(R, cfg.T)
    T_hat, _ = toeplitz_recon.reconstruct(R)
    Tm_hat, _ = toeplitz_recon.reconstruct(Rm)
    return {
        "log_lr_true": sphericity.lr_stat(R, ctx.T_N).log_lr,
        "log_lr_recon": sphericity.lr_stat(R, T_hat).log_lr,
        "log_lr_rmt": sphericity.lr_stat(Rm, Tm_hat).log_lr,
        "shrinks": bool(corr.dynamic_range_shrinks),
    }


def _trial_oversampled(ctx, k):
    cfg = ctx.spec.scenario
    rng = trial_rng(cfg.seed, k)
    phases = draw_phase_errors(cfg.phi_max_deg, cfg.N, rng)
    sectors = oversampled.sector_matrices(cfg.d_over_lambda, cfg.N, ctx.spec.options.element_pattern)
    xi = draw_xi(cfg.T, cfg.N, rng)
    zero = np.zeros(cfg.N)
    B0 = oversampled.b_matrix(generate_snapshots(ctx.T_N, zero, cfg.T, xi=xi), sectors.R_inv)
    Be = oversampled.b_matrix(generate_snapshots(ctx.T_N, phases, cfg.T, xi=xi), sectors.R_inv)
    r0 = oversampled.optimize_phases(B0, zero)
    re = oversampled.optimize_phases(Be, zero)
    before = oversampled.invisible_power(zero, B0)
    return {
        "power_before": before,
        "power_after": r0.invisible_power,
        "gain_db": oversampled.gain_db(before, r0.invisible_power),
        "power_before_err": oversampled.invisible_power(zero, Be),
        "power_after_err": re.invisible_power,
        "delta_rmse_deg": oversampled.decomposition_residual(re.psi, r0.psi, phases),
        "iterations": r0.iterations,
        "converged": bool(r0.converged and re.converged),
    }


_WORKERS = {
    ExperimentKind.ML_BENCHMARK: _trial_ml,
    ExperimentKind.INVARIANT: _trial_invariant,
    ExperimentKind.ADHOC: _trial_adhoc,
    ExperimentKind.LR_PDF: _trial_lr,
    ExperimentKind.OVERSAMPLED: _trial_oversampled,
}

_METRICS = {
    ExperimentKind.LR_PDF: ["log_lr_true", "log_lr_recon", "log_lr_rmt", "shrinks"],
    ExperimentKind.OVERSAMPLED: [
        "power_before", "power_after", "gain_db", "power_before_err", "power_after_err",
        "delta_rmse_deg", "iterations", "converged",
    ],
}


def _columns(spec):
    if spec.kind in _METRICS:
        metrics = _METRICS[spec.kind]
    else:
        metrics = ["rmse_deg"] + residual_columns(spec.scenario.N)
        if spec.kind is ExperimentKind.ML_BENCHMARK:
            metrics.append("lambda_min")
    return ["trial", "seed_offset"] + metrics + ["error"]


def _safe_trial(worker, ctx, k):
    try:
        rec = worker(ctx, k)
        rec["error"] = ""
    except UlacalError as exc:
        rec = {"error": type(exc).__name__}
    rec["trial"] = k
    rec["seed_offset"] = k
    return rec


def _column(records, name):
    return np.array([float(r[name]) for r in records if r.get("error", "") == "" and r.get(name, "") != ""])


def summarize(spec, records):
    """Summary dictionary recomputable from the per-trial records alone."""
    ok = [r for r in records if r.get("error", "") == ""]
    out = {"kind": spec.kind.value, "trials": len(records), "failed": len(records) - len(ok)}
    if spec.kind in (ExperimentKind.ML_BENCHMARK, ExperimentKind.INVARIANT, ExperimentKind.ADHOC):
        out["align"] = spec.resolved_align()
        out["sqrt_second_moment_deg"] = summarize_sqrt_second_moment(ok)
    elif spec.kind is ExperimentKind.LR_PDF:
        cols = {c: np.sort(_column(ok, c)) for c in ("log_lr_true", "log_lr_recon", "log_lr_rmt")}
        for c, v in cols.items():
            for p in (5, 50, 95):
                out[f"{c}_q{p:02d}"] = float(np.percentile(v, p))
        out["ks_rmt_vs_true"] = sphericity.ks_distance(cols["log_lr_rmt"], cols["log_lr_true"])
        out["ks_recon_vs_true"] = sphericity.ks_distance(cols["log_lr_recon"], cols["log_lr_true"])
        out["shrink_fraction"] = float(np.mean(_column(ok, "shrinks")))
    elif spec.kind is ExperimentKind.OVERSAMPLED:
        delta = _column(ok, "delta_rmse_deg")
        out["mean_gain_db"] = float(np.mean(np.sort(_column(ok, "gain_db"))))
        out["mean_power_before"] = float(np.mean(np.sort(_column(ok, "power_before"))))
        out["mean_power_after"] = float(np.mean(np.sort(_column(ok, "power_after"))))
        out["delta_max_deg"] = float(delta.max())
        out["delta_le_0p1_count"] = int(np.sum(delta <= 0.1))
        out["delta_gt_10_count"] = int(np.sum(delta > 10.0))
        out["all_converged"] = bool(np.all(_column(ok, "converged") == 1))
    return out


def _crb_report(spec, T_N, start):
    cfg = spec.scenario
    simple = calib_known.crb(T_N, cfg.T)
    full = calib_known.crb_full(T_N, cfg.T)
    rows = [
        {"trial": n, "seed_offset": 0, "element": n, "crb_deg": simple.bound_deg[n], "crb_full_deg": full.bound_deg[n], "error": ""}
        for n in range(cfg.N)
    ]
    finite = np.where(np.isfinite(simple.bound), simple.bound, np.inf)
    best = int(np.argmin(finite[1:])) + 1
    summary = {"kind": spec.kind.value, "trials": 1, "failed": 0, "min_element": best, "min_crb_deg": float(simple.bound_deg[best])}
    cols = ["trial", "seed_offset", "element", "crb_deg", "crb_full_deg", "error"]
    return ExperimentReport(spec, cols, rows, summary, wall_time=time.perf_counter() - start)


def _exact_oversampled(spec, T_N):
    cfg = spec.scenario
    R_inv = oversampled.sector_matrices(cfg.d_over_lambda, cfg.N, spec.options.element_pattern).R_inv
    zero = np.zeros(cfg.N)
    B = oversampled.asymptotic_b(T_N, zero, R_inv)
    res = oversampled.optimize_phases(B, zero)
    before = oversampled.invisible_power(zero, B)
    return {
        "exact_power_before": float(before),
        "exact_power_after": float(res.invisible_power),
        "exact_gain_db": float(oversampled.gain_db(before, res.invisible_power)),
    }


def run_experiment(spec, jobs=1, out_dir=None, progress=None):
    """Run all trials of ``spec`` and aggregate them.

    Parameters
    ----------
    jobs : int
        Worker processes. Results are identical for any value.
    out_dir : path, optional
        When given, the report files are written there.
    progress : callable, optional
        Called with the number of finished trials every 100 trials.
    """
    start = time.perf_counter()
    spec = ExperimentSpec(spec.kind, spec.scenario, spec.options)
    T_N = build_covariance(spec.scenario).matrix()
    if spec.kind is ExperimentKind.CRB_PROFILE:
        report = _crb_report(spec, T_N, start)
    else:
        ctx = _Context(spec, T_N, spec.resolved_align())
        task = partial(_safe_trial, _WORKERS[spec.kind], ctx)
        trials = range(spec.scenario.trials)
        records = []
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for rec in pool.map(task, trials, chunksize=max(1, len(trials) // (8 * jobs))):
                    records.append(rec)
                    if progress and len(records) % 100 == 0:
                        progress(len(records))
        else:
            for k in trials:
                records.append(task(k))
                if progress and len(records) % 100 == 0:
                    progress(len(records))
        records.sort(key=lambda r: r["trial"])
        summary = summarize(spec, records)
        if spec.kind is ExperimentKind.OVERSAMPLED:
            summary.update(_exact_oversampled(spec, T_N))
        report = ExperimentReport(spec, _columns(spec), records, summary)
        for name in _columns(spec):
            if name in ("trial", "seed_offset", "error") or name.startswith("res_"):
                continue
            vals = _column(records, name)
            if vals.size:
                report.histograms[name] = histogram(vals, spec.options.bins)
    report.wall_time = time.perf_counter() - start
    if out_dir is not None:
        report.write(out_dir)
    return report


def replace_scenario(spec, **changes):
    return replace(spec, scenario=spec.scenario.replace(**changes))


def options_from_mapping(values, base=None):
    """Options from ``{field: text}``; unknown keys raise ``KeyError``."""
    base = base or ExperimentOptions()
    known = {f.name: f for f in fields(ExperimentOptions)}
    kwargs = asdict(base)
    for key, raw in values.items():
        if key not in known:
            raise KeyError(key)
        default = getattr(ExperimentOptions(), key)
        if isinstance(default, bool):
            kwargs[key] = raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        else:
            kwargs[key] = str(raw).strip()
    return ExperimentOptions(**kwargs)
