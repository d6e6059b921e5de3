"""Acceptance suite: one test per criterion, one printed verdict line each.

Every criterion is checked against an independent oracle or a Monte-Carlo
simulation with an explicit slack; trial data is a pure function of fixed
seeds, so verdicts are reproducible. Run with `pytest tests/test_acceptance.py`.
"""

import json
import math

import numpy as np
import pytest

from test_bounds import wsr_reference

from riskcal.bounds import (
    BinomialCount,
    BoundedSample,
    UcbSpec,
    clopper_pearson_ucb,
    clt_ucb,
    hoeffding_ucb,
    wsr_ucb,
)
from riskcal.ppi import pp_risk
from riskcal.rcps import (
    LossTable,
    ParameterGrid,
    RiskSpec,
    fixed_sequence_calibrate,
)
from riskcal.sim import (
    ScenarioConfig,
    brute_force_cp_oracle,
    generate_scenario,
    run_coverage_experiment,
    run_etsc_experiment,
)

ALPHA, DELTA = 0.15, 0.1
DELTA1, DELTA2 = 0.01, 0.09


def report(capsys, num, desc, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {desc}"
    if detail:
        line += f" ({detail})"
    with capsys.disabled():
        print(line)
    assert ok, line


def acklam_normal_quantile(p):
    """Independent inverse normal CDF: Acklam's rational approximation
    followed by one Halley refinement against math.erfc."""
    a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00]
    b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00]
    plow, phigh = 0.02425, 1 - 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        x = ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
             / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1))
    elif p <= phigh:
        q = p - 0.5
        r = q * q
        x = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
             / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1))
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
              / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1))
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


_CACHE = {}


def fig1_reports():
    if "fig1" not in _CACHE:
        cfg = ScenarioConfig(kind="mono_binary", master_seed=1234)
        methods = ["rcps_labeled_cp", "ss_binary", "ss_general_wsr", "naive_augmented"]
        _CACHE["fig1"] = (cfg, methods, run_coverage_experiment(cfg, methods, 1000))
    return _CACHE["fig1"]


def etsc_config():
    return ScenarioConfig(
        kind="etsc_basic",
        n_labeled=300,
        n_unlabeled=50000,
        n_test=16000,
        n_stage1=300,
        imputation_accuracy=0.93,
        alpha=0.1,
        delta=0.01,
        delta1=0.001,
        delta2=0.009,
        master_seed=777,
    )


def etsc_reports():
    if "etsc" not in _CACHE:
        _CACHE["etsc"] = run_etsc_experiment(
            etsc_config(), ["binary_cp", "labeled_only"], 100
        )
    return _CACHE["etsc"]


def test_criterion_01_clopper_pearson_exactness(capsys):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 2001))
        k = int(rng.integers(0, n + 1))
        delta = float(rng.uniform(0.005, 0.5))
        count = BinomialCount(n, k)
        worst = max(worst, abs(
            clopper_pearson_ucb(count, delta) - brute_force_cp_oracle(count, delta)
        ))
    closed = 0.0
    for n in (1, 5, 10, 130, 2000):
        for delta in (0.01, 0.05, 0.1, 0.5):
            got = clopper_pearson_ucb(BinomialCount(n, 0), delta)
            closed = max(closed, abs(got - (1.0 - delta ** (1.0 / n))))
    ok = worst <= 2e-6 and closed <= 1e-8
    report(capsys, 1, "Clopper-Pearson matches brute-force oracle", ok,
           f"max |err| oracle {worst:.2e}, zero-failure closed form {closed:.2e}")


def test_criterion_02_hoeffding_clt_closed_forms(capsys):
    rng = np.random.default_rng(102)
    worst_h = worst_c = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 400))
        lo = float(rng.uniform(-2, 0))
        hi = lo + float(rng.uniform(0.5, 3))
        vals = rng.uniform(lo, hi, size=n)
        delta = float(rng.uniform(0.01, 0.5))
        sample = BoundedSample(vals, lo, hi)
        expect_h = vals.mean() + (hi - lo) * math.sqrt(math.log(1 / delta) / (2 * n))
        worst_h = max(worst_h, abs(hoeffding_ucb(sample, delta) - expect_h))
        s = vals.std(ddof=1)
        expect_c = vals.mean() + acklam_normal_quantile(1 - delta) * s / math.sqrt(n)
        worst_c = max(worst_c, abs(clt_ucb(sample, delta) - expect_c))
    ok = worst_h <= 1e-9 and worst_c <= 1e-9
    report(capsys, 2, "Hoeffding/CLT match independent closed-form scripts", ok,
           f"max |err| hoeffding {worst_h:.2e}, clt {worst_c:.2e}")


def test_criterion_03_wsr_validity_and_reference(capsys):
    delta, sims = 0.1, 2000
    worst_rate = 0.0
    for mu in (0.1, 0.3):
        for n in (50, 130):
            miss = 0
            for s in range(sims):
                rng = np.random.default_rng([103, int(mu * 10), n, s])
                vals = (rng.uniform(size=n) < mu).astype(float)
                if wsr_ucb(BoundedSample(vals), delta) < mu:
                    miss += 1
            worst_rate = max(worst_rate, miss / sims)
    rng = np.random.default_rng(104)
    worst_ref = 0.0
    for _ in range(10):
        n = int(rng.integers(20, 120))
        lo = float(rng.uniform(-1, 0))
        hi = lo + float(rng.uniform(1, 3))
        vals = rng.uniform(lo, hi, size=n)
        got = wsr_ucb(BoundedSample(vals, lo, hi), delta)
        ref = wsr_reference(list(vals), lo, hi, delta)
        worst_ref = max(worst_ref, abs(got - ref))
    ok = worst_rate <= 0.121 and worst_ref <= 1e-8
    report(capsys, 3, "WSR validity and reference-transcription match", ok,
           f"worst miss rate {worst_rate:.4f} <= 0.121, max |ref err| {worst_ref:.2e}")


def test_criterion_04_fixed_sequence_fwer(capsys):
    alpha, delta, runs, n = 0.3, 0.1, 1000, 80
    means = np.array([0.12, 0.22, 0.34, 0.27, 0.45, 0.2])
    bad = means > alpha
    errors = 0
    grid = ParameterGrid(labels=tuple(f"q{m}" for m in range(means.size)))
    for run in range(runs):
        rng = np.random.default_rng([105, run])
        losses = (rng.uniform(size=(n, means.size)) < means).astype(float)
        outcome = fixed_sequence_calibrate(
            LossTable(losses, grid),
            RiskSpec(alpha=alpha, delta=delta),
            UcbSpec("clopper_pearson", delta),
        )
        if outcome.stop_index >= 1 and bad[: outcome.stop_index].any():
            errors += 1
    rate = errors / runs
    ok = rate <= 0.13
    report(capsys, 4, "fixed-sequence FWER controlled at delta", ok,
           f"empirical FWER {rate:.4f} <= 0.13")


def test_criterion_05_pp_risk_unbiasedness(capsys):
    trials = 1000
    worst_z = 0.0
    for accuracy in (0.5, 0.81, 1.0):
        cfg = ScenarioConfig(
            kind="mono_binary", n_labeled=60, n_unlabeled=600,
            imputation_accuracy=accuracy, master_seed=106,
        )
        columns = (0, 9, 19)
        for lam in (0.0, 1.0):
            estimates = {m: [] for m in columns}
            for trial in range(trials):
                data, curve = generate_scenario(cfg, trial)
                for m in columns:
                    estimates[m].append(pp_risk(data, m, lam=lam))
            for m in columns:
                vals = np.array(estimates[m])
                se = vals.std(ddof=1) / math.sqrt(trials)
                worst_z = max(worst_z, abs(vals.mean() - curve[m]) / se)
    ok = worst_z <= 3.0
    report(capsys, 5, "prediction-powered risk is unbiased", ok,
           f"worst |mean - truth| = {worst_z:.2f} standard errors <= 3")


def test_criterion_06_variance_identities(capsys):
    rng = np.random.default_rng(107)
    worst = 0.0
    clipped_le_unclipped = True
    equality_when_p2_zero = True
    for case in range(100):
        n = int(rng.integers(5, 200))
        l_true = (rng.uniform(size=n) < rng.uniform()).astype(float)
        if case % 4 == 0:
            # force p2 = 0: imputations never overcall
            l_imp = l_true * (rng.uniform(size=n) < rng.uniform()).astype(float)
        else:
            l_imp = (rng.uniform(size=n) < rng.uniform()).astype(float)
        d = l_true - l_imp
        p1 = float(np.mean((l_true == 1) & (l_imp == 0)))
        p2 = float(np.mean((l_true == 0) & (l_imp == 1)))
        var_d = float(d.var())
        var_clip = float(np.maximum(d, 0).var())
        worst = max(worst, abs(var_d - (p1 + p2 - (p1 - p2) ** 2)))
        worst = max(worst, abs(var_clip - (p1 - p1 ** 2)))
        if var_clip > var_d + 1e-12:
            clipped_le_unclipped = False
        if p2 == 0.0 and abs(var_clip - var_d) > 1e-12:
            equality_when_p2_zero = False
    ok = worst <= 1e-12 and clipped_le_unclipped and equality_when_p2_zero
    report(capsys, 6, "binary rectifier variance identities", ok,
           f"max identity error {worst:.2e}, clipped <= unclipped with equality at p2=0")


def test_criterion_07_end_to_end_coverage(capsys):
    _, _, reports = fig1_reports()
    vr = {m: r.violation_rate for m, r in reports.items()}
    valid_ok = all(
        vr[m] <= 0.13 for m in ("rcps_labeled_cp", "ss_binary", "ss_general_wsr")
    )
    naive_ok = vr["naive_augmented"] > 0.13
    closer_ok = abs(reports["ss_binary"].mean_true_risk - ALPHA) < abs(
        reports["rcps_labeled_cp"].mean_true_risk - ALPHA
    )
    ok = valid_ok and naive_ok and closer_ok
    report(capsys, 7, "end-to-end coverage reproduces the headline figure", ok,
           "violations " + ", ".join(f"{m}={vr[m]:.3f}" for m in vr)
           + f"; mean risk ss_binary {reports['ss_binary'].mean_true_risk:.3f}"
           + f" vs labeled {reports['rcps_labeled_cp'].mean_true_risk:.3f}")


def test_criterion_08_accuracy_trend(capsys):
    stds = []
    for accuracy in (0.81, 0.9, 0.95, 1.0):
        cfg = ScenarioConfig(
            kind="mono_binary", imputation_accuracy=accuracy, master_seed=108
        )
        r = run_coverage_experiment(cfg, ["ss_binary"], 500)["ss_binary"]
        stds.append(r.std_true_risk)
    inversions = [
        (i, stds[i + 1] - stds[i])
        for i in range(len(stds) - 1)
        if stds[i + 1] > stds[i]
    ]
    ok = len(inversions) == 0 or (
        len(inversions) == 1 and inversions[0][1] <= 0.1 * stds[inversions[0][0]]
    )
    report(capsys, 8, "selected-risk spread shrinks as imputations improve", ok,
           "stds " + ", ".join(f"{s:.4f}" for s in stds))


def test_criterion_09_crossover_and_tuning(capsys):
    cfg = ScenarioConfig(
        kind="mono_binary", n_labeled=4000, n_unlabeled=20000, master_seed=109
    )
    reports = run_coverage_experiment(cfg, ["ss_general_wsr", "ss_binary"], 200)
    crossover_ok = (
        reports["ss_general_wsr"].mean_true_risk
        >= reports["ss_binary"].mean_true_risk
    )
    cfg_half = ScenarioConfig(
        kind="mono_binary", imputation_accuracy=0.5, master_seed=110
    )
    # compare the first-column UCB, which every trial computes
    from riskcal.ppi import PowerTuning, ss_general_calibrate

    tuned_ucbs = []
    fixed_ucbs = []
    for trial in range(200):
        data, _ = generate_scenario(cfg_half, trial)
        t = ss_general_calibrate(
            data, RiskSpec(ALPHA, DELTA), "clt", tuning=PowerTuning("clt_inline")
        )
        f = ss_general_calibrate(data, RiskSpec(ALPHA, DELTA), "clt")
        tuned_ucbs.append(t.ucb_trace[0])
        fixed_ucbs.append(f.ucb_trace[0])
    tuning_ok = float(np.mean(tuned_ucbs)) <= float(np.mean(fixed_ucbs))
    ok = crossover_ok and tuning_ok
    report(capsys, 9, "large-n crossover and lambda tuning direction", ok,
           f"mean risk wsr {reports['ss_general_wsr'].mean_true_risk:.4f} >= "
           f"binary {reports['ss_binary'].mean_true_risk:.4f}; "
           f"mean first UCB tuned {np.mean(tuned_ucbs):.4f} <= "
           f"fixed {np.mean(fixed_ucbs):.4f}")


def test_criterion_10_etsc_conditional_guarantee(capsys):
    out = etsc_reports()
    alpha = etsc_config().alpha
    violations = sum(r > alpha + 0.01 for r in out["binary_cp"]["max_risk"])
    coverage_ok = violations <= 1
    ss_curve = np.array(out["binary_cp"]["mean_halt_curve"])
    lab_curve = np.array(out["labeled_only"]["mean_halt_curve"])
    dominance = float(np.mean(ss_curve >= lab_curve - 1e-12))
    dominance_ok = dominance >= 0.7
    ok = coverage_ok and dominance_ok
    report(capsys, 10, "conditional gap-risk guarantee on the stream scenario", ok,
           f"{violations}/100 trials exceed alpha+0.01; halt-curve dominance "
           f"at {dominance:.0%} of timesteps")


def test_criterion_11_determinism(capsys):
    cfg, methods, first = fig1_reports()
    again = run_coverage_experiment(cfg, methods, 1000)
    fig1_ok = json.dumps(
        {m: r.to_dict() for m, r in first.items()}, sort_keys=True
    ) == json.dumps({m: r.to_dict() for m, r in again.items()}, sort_keys=True)
    etsc_first = etsc_reports()
    etsc_again = run_etsc_experiment(etsc_config(), ["binary_cp", "labeled_only"], 100)
    etsc_ok = json.dumps(etsc_first, sort_keys=True) == json.dumps(
        etsc_again, sort_keys=True
    )
    ok = fig1_ok and etsc_ok
    report(capsys, 11, "repeated runs with identical seeds are byte-identical", ok,
           f"coverage identical={fig1_ok}, etsc identical={etsc_ok}")
