"""Full-size acceptance runs, one test and one PASS/FAIL line per criterion.

Expected runtime on one core is roughly half an hour. Accuracy cells share a
single Monte Carlo sweep per (N, T, phi_max) so every estimator sees the
same snapshots.
"""

from functools import lru_cache

import numpy as np
import pytest

from ulacal import calib_known, oversampled, rmt, sphericity, toeplitz_recon
from ulacal.harness import ExperimentSpec, default_scenario, run_experiment
from ulacal.scenario import (
    ScenarioConfig,
    ToeplitzHermitian,
    build_covariance,
    draw_phase_errors,
    draw_xi,
    generate_snapshots,
    sample_covariance,
    trial_rng,
)

from conftest import random_pd

pytestmark = pytest.mark.acceptance

TRIALS = 1000
T_GRID = (100, 300, 3000, 30000)
ML_TARGETS = {17: (2.19, 1.25, 0.38, 0.13), 100: (2.88, 1.65, 0.55, 0.17)}
SUPERDIAG_TARGETS = {17: (9.5, 5.5, 1.8, 0.5), 100: (29.9, 16.9, 5.3, 1.7)}
RATIO_TARGETS = (82.7, 47.3, 9.7, 3.1)


def _rms(sq_sums, n):
    return float(np.sqrt(np.sum(sq_sums) / (len(sq_sums) * n)))


@lru_cache(maxsize=None)
def sweep(N, T, phi_max, full=True):
    """Per-trial aligned residuals (degrees) for every estimator on shared data."""
    cfg = ScenarioConfig(N=N, T=T, phi_max_deg=phi_max, trials=TRIALS)
    T_N = build_covariance(cfg)
    M = T_N.matrix()
    arg_t1 = np.angle(M[0, 1])
    out = {k: np.empty((TRIALS, N)) for k in ("ml", "sd_const", "sd_affine", "sd_est", "adhoc")}
    for k in range(TRIALS):
        rng = trial_rng(cfg.seed, k)
        phases = draw_phase_errors(phi_max, N, rng)
        Y = generate_snapshots(T_N, phases, T, rng)
        R = sample_covariance(Y)
        ml = calib_known.ml_estimate(Y, T_N).phases
        sd = calib_known.superdiag_estimate(R, arg_t1).phases
        out["ml"][k] = calib_known.align_and_rmse(ml, phases, mode="none")[0]
        out["sd_const"][k] = calib_known.align_and_rmse(sd, phases, mode="constant")[0]
        if full:
            sd_est = calib_known.superdiag_estimate(R, "estimate").phases
            ah = calib_known.adhoc_estimate(R, T_N).phases
            out["sd_affine"][k] = calib_known.align_and_rmse(sd, phases, mode="affine")[0]
            out["sd_est"][k] = calib_known.align_and_rmse(sd_est, phases, mode="affine")[0]
            out["adhoc"][k] = calib_known.align_and_rmse(ah, phases, mode="affine")[0]
    return {k: np.rad2deg(v) for k, v in out.items()}


def moment(res):
    return float(np.sqrt(np.mean(res**2)))


def within(value, target, rel):
    return abs(value - target) <= rel * target


def cells_line(values, targets, rel):
    parts, ok = [], True
    for T, v, t in zip(T_GRID, values, targets):
        good = within(v, t, rel)
        ok &= good
        parts.append(f"T={T}: {v:.3g} vs {t} ({(v / t - 1) * 100:+.0f}%){'' if good else ' X'}")
    return ok, "; ".join(parts)


def test_ml_accuracy(verdict):
    lines, ok = [], True
    for phi in (5.0, 180.0):
        vals = [moment(sweep(17, T, phi)["ml"]) for T in T_GRID]
        good, text = cells_line(vals, ML_TARGETS[17], 0.20)
        ok &= good
        lines.append(f"N=17 phi_max={phi:g}: {text}")
    vals = [moment(sweep(100, T, 5.0, full=False)["ml"]) for T in T_GRID]
    good, text = cells_line(vals, ML_TARGETS[100], 0.20)
    ok &= good
    lines.append(f"N=100: {text}")
    verdict("ML accuracy (+-20%)", ok, " | ".join(lines))


def test_superdiag_accuracy(verdict):
    lines, ok = [], True
    vals = [moment(sweep(17, T, 5.0)["sd_const"]) for T in T_GRID]
    good, text = cells_line(vals, SUPERDIAG_TARGETS[17], 0.20)
    ok &= good
    lines.append(f"N=17: {text}")
    vals = [moment(sweep(100, T, 5.0, full=False)["sd_const"]) for T in T_GRID]
    good, text = cells_line(vals, SUPERDIAG_TARGETS[100], 0.20)
    ok &= good
    lines.append(f"N=100: {text}")
    # estimated-argument variant vs true-argument variant, both ramp-aligned
    ratios = []
    for T in T_GRID:
        s = sweep(17, T, 180.0)
        ratios.append(moment(s["sd_est"]) / moment(s["sd_affine"]))
    good = all(abs(r - 1) <= 0.10 for r in ratios)
    ok &= good
    lines.append("estimated/true arg ratio " + ", ".join(f"{r:.4f}" for r in ratios))
    verdict("superdiag accuracy (+-20%; variants +-10%)", ok, " | ".join(lines))


def test_ratio_estimator_accuracy(verdict):
    vals = [moment(sweep(17, T, 5.0)["adhoc"]) for T in T_GRID]
    ok, text = cells_line(vals, RATIO_TARGETS, 0.25)
    verdict("ratio estimator accuracy (+-25%)", ok, f"N=17: {text}")


def test_phi_max_invariance(verdict):
    worst = 0.0
    for T in T_GRID:
        a, b = sweep(17, T, 5.0), sweep(17, T, 180.0)
        for key in ("sd_const", "sd_affine", "sd_est", "adhoc"):
            worst = max(worst, float(np.abs(a[key] - b[key]).max()))
    verdict("phi_max invariance (1e-9)", worst <= 1e-9, f"max per-trial residual difference {worst:.2e} deg")


def test_miscalibration_detection(verdict):
    cfg = ScenarioConfig(T=300, phi_max_deg=2.0)
    T_N = build_covariance(cfg)
    ref = sphericity.pipeline_null_samples(T_N, 300, TRIALS, seed=10_001, use_rmt=True)
    wishart = sphericity.null_samples(17, 300, TRIALS, seed=10_002)
    rejected = rejected_w = 0
    for k in range(TRIALS):
        rng = trial_rng(cfg.seed, k)
        phases = draw_phase_errors(2.0, 17, rng)
        R = sample_covariance(generate_snapshots(T_N, phases, 300, rng))
        res = sphericity.toeplitz_origin_test(R, 300, True, ref, alpha=0.01)
        rejected += res.verdict is sphericity.Verdict.NON_TOEPLITZ_ORIGIN
        rejected_w += res.log_lr < wishart.quantile(0.01)
    rate = rejected / TRIALS
    verdict(
        "miscalibration detection at phi_max=2 deg (>=99%)",
        rate >= 0.99,
        f"rejection rate {rate:.3f} (calibrated-pipeline reference); {rejected_w / TRIALS:.3f} against the Wishart null",
    )


def test_rmt_overlap(verdict):
    parts, ok = [], True
    for T in (850,):
        spec = ExperimentSpec("lr_pdf", default_scenario("lr_pdf").replace(T=T, trials=TRIALS))
        s = run_experiment(spec).summary
        good = s["ks_rmt_vs_true"] <= 0.15 and s["ks_rmt_vs_true"] < s["ks_recon_vs_true"] and s["shrink_fraction"] >= 0.99
        ok &= good
        parts.append(
            f"T={T}: KS(rmt,true)={s['ks_rmt_vs_true']:.3f}, KS(recon,true)={s['ks_recon_vs_true']:.3f}, "
            f"median log-LR true/recon/rmt={s['log_lr_true_q50']:.3f}/{s['log_lr_recon_q50']:.3f}/{s['log_lr_rmt_q50']:.3f}, "
            f"shrinkage {s['shrink_fraction']:.3f}"
        )
    verdict("RMT overlap (KS<=0.15, shrinkage>=99%)", ok, " | ".join(parts))


@lru_cache(maxsize=None)
def oversampled_run(d_over_lambda):
    spec = ExperimentSpec("oversampled", default_scenario("oversampled").replace(d_over_lambda=d_over_lambda, trials=100))
    return run_experiment(spec).summary


def test_oversampled_gains(verdict):
    s1, s2 = oversampled_run(0.1), oversampled_run(0.2)
    checks = {
        "d/l=0.1 mean gain": (s1["mean_gain_db"], abs(s1["mean_gain_db"] - 6.53) <= 1.0, "6.53+-1 dB"),
        "d/l=0.2 mean gain": (s2["mean_gain_db"], abs(s2["mean_gain_db"] - 20.0) <= 3.0, "20+-3 dB"),
        "exact before": (s1["exact_power_before"], within(s1["exact_power_before"], 2.3, 0.10), "2.3+-10%"),
        "exact after": (s1["exact_power_after"], within(s1["exact_power_after"], 0.75, 0.10), "0.75+-10%"),
    }
    ok = all(c[1] for c in checks.values())
    text = "; ".join(f"{k}={v:.4g} (target {t}){'' if good else ' X'}" for k, (v, good, t) in checks.items())
    verdict("oversampled gains", ok, text)


def test_decomposition_residual(verdict):
    parts, ok = [], True
    for dl in (0.1, 0.2, 0.3):
        s = oversampled_run(dl)
        good = s["delta_le_0p1_count"] >= 95
        ok &= good
        parts.append(f"d/l={dl}: {s['delta_le_0p1_count']}/100 trials <=0.1 deg (max {s['delta_max_deg']:.2g})")
    s = oversampled_run(0.4)
    good = s["delta_gt_10_count"] >= 1
    ok &= good
    parts.append(f"d/l=0.4: {s['delta_gt_10_count']} trials >10 deg (max {s['delta_max_deg']:.3g})")
    verdict("decomposition residual", ok, "; ".join(parts))


def _random_toeplitz(rng, n):
    k = np.arange(n)
    amps, freqs = rng.uniform(0.1, 1.0, 4), rng.uniform(-np.pi, np.pi, 4)
    col = (amps[:, None] * np.exp(1j * freqs[:, None] * k[None, :])).sum(axis=0)
    col[0] = col[0].real + rng.uniform(0.05, 0.5)
    return ToeplitzHermitian(col)


def _property_results(tmp_path):
    rng = np.random.default_rng(2024)
    res = {}

    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 30))
        Tinv = np.linalg.inv(_random_toeplitz(rng, n).matrix())
        worst = max(worst, np.abs(toeplitz_recon.gs_inverse(Tinv[:, 0]) - Tinv).max() / np.abs(Tinv).max())
    res["GS round trip"] = (worst <= 1e-8, f"{worst:.1e}")

    worst = 0.0
    z = np.exp(2j * np.pi * np.arange(512) / 512)
    for _ in range(200):
        n = int(rng.integers(2, 18))
        R = sample_covariance(draw_xi(3 * n, n, rng) @ random_pd(rng, n))
        W = toeplitz_recon.me_vector(R)
        P = toeplitz_recon.flip_zeros(W)
        a, b = np.abs(np.polyval(P[::-1], z)), np.abs(np.polyval(W[::-1], z))
        worst = max(worst, np.abs(a / b - 1).max())
    res["ME magnitude"] = (worst <= 1e-7, f"{worst:.1e}")

    worst = 0.0
    for _ in range(100):
        B = random_pd(rng, 8)
        psi = rng.uniform(-np.pi, np.pi, 8)
        g = oversampled.gradient_q(psi, B)
        fd = np.zeros(8)
        for k in range(1, 8):
            e = np.zeros(8)
            e[k] = 1e-6
            fd[k] = (oversampled.objective_q(psi + e, B) - oversampled.objective_q(psi - e, B)) / 2e-6
        worst = max(worst, np.abs(g - fd).max() / np.abs(fd).max())
    res["gradient FD"] = (worst <= 1e-5, f"{worst:.1e}")

    worst = 0.0
    for _ in range(20):
        cfg = ScenarioConfig(
            W1=rng.uniform(0.05, 0.45), W2=rng.uniform(0.05, 0.45), theta0=rng.uniform(-60, 60),
            d_over_lambda=rng.uniform(0.1, 0.5),
        )
        J = calib_known.fisher_matrix(build_covariance(cfg), draw_phase_errors(5.0, 17, rng), 1)
        off = J - np.diag(np.diag(J))
        worst = max(worst, np.abs(off).max() / np.abs(np.diag(J)).max())
    res["FIM off-diagonal"] = (worst <= 1e-9, f"{worst:.2g} of diagonal scale")

    worst = 0.0
    for rho in np.linspace(-0.95, 0.95, 39):
        if abs(rho) < 1e-9:
            continue
        b = calib_known.crb(np.array([[1.0, rho], [rho, 1.0]]), 10).bound[1]
        worst = max(worst, abs(b / ((1 - rho**2) / (20 * rho**2)) - 1))
    res["CRB 2x2"] = (worst <= 1e-13, f"{worst:.1e}")

    worst, interlace = 0.0, True
    for k in range(1000):
        r = np.random.default_rng(k)
        N = int(r.integers(1, 25))
        T = int(r.integers(N + 1, 20 * N + 2))
        lam = np.linalg.eigvalsh(sample_covariance(draw_xi(T, N, r) @ random_pd(r, N)))
        corr = rmt.mestre_correct(lam, T)
        worst = max(worst, np.abs(rmt.mestre_residual(corr.mu_hat, corr.lambda_hat, corr.C)).max() * corr.C)
        lower = np.concatenate([[0.0], corr.lambda_hat[:-1]])
        interlace &= bool(np.all(corr.mu_hat > lower) and np.all(corr.mu_hat < corr.lambda_hat))
    res["Mestre residual+interlacing"] = (worst <= 1e-10 and interlace, f"{worst:.1e}")

    worst, in_range = 0.0, True
    for _ in range(200):
        R, M = random_pd(rng, 6), random_pd(rng, 6)
        base = sphericity.lr_stat(R, M).log_lr
        in_range &= bool(0.0 < np.exp(base) <= 1.0)
        a, b = np.exp(rng.uniform(-6, 6, 2))
        worst = max(worst, abs(sphericity.lr_stat(a * R, b * M).log_lr - base) / max(1.0, abs(base)))
    res["LR range+scale"] = (worst <= 1e-12 and in_range, f"{worst:.1e}")

    same = True
    for kind in ("ml_benchmark", "invariant", "adhoc", "lr_pdf", "oversampled", "crb_profile"):
        spec = ExperimentSpec(kind, default_scenario(kind).replace(trials=5))
        run_experiment(spec, jobs=1, out_dir=tmp_path / kind / "a")
        run_experiment(spec, jobs=1, out_dir=tmp_path / kind / "b")
        run_experiment(spec, jobs=3, out_dir=tmp_path / kind / "c")
        for f in (tmp_path / kind / "a").iterdir():
            data = f.read_bytes()
            same &= data == (tmp_path / kind / "b" / f.name).read_bytes() == (tmp_path / kind / "c" / f.name).read_bytes()
    res["determinism"] = (same, "byte-identical" if same else "differs")
    return res


def test_property_suites(verdict, tmp_path):
    res = _property_results(tmp_path)
    ok = all(v[0] for v in res.values())
    text = "; ".join(f"{k} {'ok' if v[0] else 'X'} ({v[1]})" for k, v in res.items())
    verdict("property suites", ok, text)
