"""Synthetic scenarios and the Monte-Carlo verification harness.

Generates loss tables with a known true risk curve and controllable
imputation accuracy, runs repeated calibrations, and reports coverage
and conservatism statistics. Every probabilistic guarantee in the other
modules is exercised here with explicit 3-sigma slacks.
"""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .bounds import UcbSpec
from .etsc import (
    EtscDataset,
    EtscRiskSpec,
    candidate_screening,
    evaluate_rule,
    stage2_calibrate,
)
from .ppi import (
    BudgetSplit,
    PowerTuning,
    SemiSupervisedLosses,
    naive_augmented_calibrate,
    ss_binary_calibrate,
    ss_general_calibrate,
)
from .rcps import LossTable, ParameterGrid, RiskSpec, fixed_sequence_calibrate

__all__ = [
    "ScenarioConfig",
    "TrialResult",
    "CoverageReport",
    "METHODS",
    "generate_scenario",
    "generate_etsc_scenario",
    "run_coverage_experiment",
    "run_etsc_experiment",
    "binomial_cdf_summation",
    "brute_force_cp_oracle",
    "config_hash",
]

SCENARIO_KINDS = ("mono_binary", "nonmono_binary", "general_bounded", "etsc_basic")
REGIMES = ("symmetric_noise", "optimistic", "pessimistic")

METHODS = (
    "rcps_labeled_cp",
    "rcps_labeled_wsr",
    "ss_binary",
    "ss_general_wsr",
    "ss_general_wsr_scaled",
    "ss_general_clt",
    "ss_general_clt_tuned",
    "naive_augmented",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic scenario description; see generate_scenario for semantics.

    The true risk curve runs from risk_lo to risk_hi across the grid in
    traversal order (the walk starts where the risk is lowest); the
    non-monotone kind permutes that curve with a fixed seed-derived
    permutation.
    """

    kind: str = "mono_binary"
    n_labeled: int = 130
    n_unlabeled: int = 5000
    n_test: int = 0
    grid_size: int = 20
    risk_lo: float = 0.02
    risk_hi: float = 0.40
    imputation_accuracy: float = 0.81
    imputation_regime: str = "optimistic"
    master_seed: int = 0
    alpha: float = 0.15
    delta: float = 0.1
    delta1: float = 0.01
    delta2: float = 0.09
    # ETSC-only knobs
    t_max: int = 8
    n_stage1: int = 150
    full_accuracy: float = 0.95

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.imputation_regime not in REGIMES:
            raise ValueError(f"unknown imputation regime {self.imputation_regime!r}")
        if min(self.n_labeled, self.n_unlabeled, self.grid_size) < 1:
            raise ValueError("sizes must be at least 1")
        if not 0.0 <= self.imputation_accuracy <= 1.0:
            raise ValueError("imputation_accuracy must lie in [0, 1]")
        if not (0.0 < self.risk_lo <= self.risk_hi < 1.0):
            raise ValueError("risk curve endpoints must satisfy 0 < lo <= hi < 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    selected: str | None
    selected_index: int | None
    true_risk_at_qhat: float | None
    violated: bool
    ucb_trace: tuple


@dataclass(frozen=True)
class CoverageReport:
    """Aggregate over trials for one method on one scenario."""

    method: str
    trials: int
    violation_rate: float
    abstain_rate: float
    mean_true_risk: float
    std_true_risk: float
    quantiles_true_risk: dict
    mean_selected_index: float
    std_selected_index: float
    config_hash: str

    def to_dict(self):
        return asdict(self)


def config_hash(config):
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _trial_rng(config, trial_index):
    # data for trial i depends only on (master_seed, i)
    return np.random.default_rng([config.master_seed, trial_index])


def true_risk_curve(config):
    curve = np.linspace(config.risk_lo, config.risk_hi, config.grid_size)
    if config.kind == "nonmono_binary":
        perm = np.random.default_rng(config.master_seed).permutation(config.grid_size)
        curve = curve[perm]
    return curve


def _grid(config):
    labels = tuple(f"q{m + 1}" for m in range(config.grid_size))
    return ParameterGrid(labels=labels)


def _binary_losses(u, curve):
    # shared latent per sample: losses are monotone across a monotone curve
    return (u[:, None] < curve[None, :]).astype(np.float64)


def _impute_binary(losses, agree, regime):
    a = agree[:, None].astype(np.float64)
    if regime == "symmetric_noise":
        return a * losses + (1.0 - a) * (1.0 - losses)
    if regime == "optimistic":
        # imputed <= true rowwise: a wrong imputation only hides errors
        return losses * a
    return np.maximum(losses, 1.0 - a)


def _general_losses(u, curve):
    # L = U**s with s chosen so the column mean equals the curve value
    s = 1.0 / curve - 1.0
    return u[:, None] ** s[None, :]


def generate_scenario(config, trial_index):
    """Draw one trial's semi-supervised loss tables.

    Returns (data, curve) where curve[m] is the exact true risk of grid
    column m. Each sample carries one latent uniform shared across columns
    and one imputation-agreement draw shared across columns.
    """
    if config.kind == "etsc_basic":
        raise ValueError("use generate_etsc_scenario for the etsc_basic kind")
    rng = _trial_rng(config, trial_index)
    curve = true_risk_curve(config)
    grid = _grid(config)
    n, N = config.n_labeled, config.n_unlabeled

    u_lab = rng.uniform(size=n)
    u_unl = rng.uniform(size=N)
    agree_lab = rng.uniform(size=n) < config.imputation_accuracy
    agree_unl = rng.uniform(size=N) < config.imputation_accuracy

    if config.kind in ("mono_binary", "nonmono_binary"):
        l_lab = _binary_losses(u_lab, curve)
        l_unl = _binary_losses(u_unl, curve)
        li_lab = _impute_binary(l_lab, agree_lab, config.imputation_regime)
        li_unl = _impute_binary(l_unl, agree_unl, config.imputation_regime)
    else:
        l_lab = _general_losses(u_lab, curve)
        l_unl = _general_losses(u_unl, curve)
        w = 1.0 - config.imputation_accuracy
        v_lab = rng.uniform(size=n)
        v_unl = rng.uniform(size=N)
        li_lab = (1.0 - w) * l_lab + w * v_lab[:, None]
        li_unl = (1.0 - w) * l_unl + w * v_unl[:, None]

    ids = tuple(f"s{i}" for i in range(n))
    data = SemiSupervisedLosses(
        labeled_true=LossTable(l_lab, grid, sample_ids=ids),
        labeled_imputed=LossTable(li_lab, grid, sample_ids=ids),
        unlabeled_imputed=LossTable(li_unl, grid),
    )
    return data, curve


def _run_method(method, data, config):
    spec = RiskSpec(config.alpha, config.delta)
    if method == "rcps_labeled_cp":
        return fixed_sequence_calibrate(data.labeled_true, spec, UcbSpec("clopper_pearson", config.delta))
    if method == "rcps_labeled_wsr":
        return fixed_sequence_calibrate(data.labeled_true, spec, UcbSpec("wsr", config.delta))
    if method == "ss_binary":
        return ss_binary_calibrate(data, config.alpha, BudgetSplit(config.delta1, config.delta2))
    if method == "ss_general_wsr":
        return ss_general_calibrate(data, spec, "wsr")
    if method == "ss_general_wsr_scaled":
        return ss_general_calibrate(data, spec, "wsr_scaled")
    if method == "ss_general_clt":
        return ss_general_calibrate(data, spec, "clt")
    if method == "ss_general_clt_tuned":
        return ss_general_calibrate(data, spec, "clt", tuning=PowerTuning("clt_inline"))
    if method == "naive_augmented":
        return naive_augmented_calibrate(data, spec)
    raise ValueError(f"unknown method {method!r}")


def run_coverage_experiment(config, methods, trials):
    """Repeat generate -> calibrate -> evaluate and aggregate per method.

    The true risk at the selected parameter is read off the known curve,
    never estimated. Abstentions count as controlled (the caller falls
    back to the trivially safe rule) and are excluded from the risk
    statistics. Deterministic given (config, trials).
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
    chash = config_hash(config)
    results = {m: [] for m in methods}
    for trial in range(trials):
        data, curve = generate_scenario(config, trial)
        for method in methods:
            outcome = _run_method(method, data, config)
            if outcome.abstained:
                results[method].append(
                    TrialResult(trial, None, None, None, False, outcome.ucb_trace)
                )
            else:
                idx = data.grid.labels.index(outcome.selected)
                risk = float(curve[idx])
                results[method].append(
                    TrialResult(
                        trial,
                        outcome.selected,
                        idx,
                        risk,
                        risk > config.alpha,
                        outcome.ucb_trace,
                    )
                )
    reports = {}
    for method in methods:
        rows = results[method]
        risks = np.array([r.true_risk_at_qhat for r in rows if r.true_risk_at_qhat is not None])
        idxs = np.array([r.selected_index for r in rows if r.selected_index is not None])
        reports[method] = CoverageReport(
            method=method,
            trials=trials,
            violation_rate=sum(r.violated for r in rows) / trials,
            abstain_rate=sum(r.selected is None for r in rows) / trials,
            mean_true_risk=float(risks.mean()) if risks.size else float("nan"),
            std_true_risk=float(risks.std(ddof=1)) if risks.size > 1 else float("nan"),
            quantiles_true_risk={
                "q10": float(np.quantile(risks, 0.1)) if risks.size else float("nan"),
                "q50": float(np.quantile(risks, 0.5)) if risks.size else float("nan"),
                "q90": float(np.quantile(risks, 0.9)) if risks.size else float("nan"),
            },
            mean_selected_index=float(idxs.mean()) if idxs.size else float("nan"),
            std_selected_index=float(idxs.std(ddof=1)) if idxs.size > 1 else float("nan"),
            config_hash=chash,
        )
    return reports


def generate_etsc_scenario(config, trial_index):
    """Draw one trial's ETSC datasets: stage1, stage2, unlabeled, test.

    Per sample: a binary label, a full-sequence prediction correct with
    probability full_accuracy, early predictions that agree with the full
    prediction with probability increasing in t (certain at t_max), and a
    confidence trajectory that is higher when the early prediction already
    matches the full one. Imputed labels match the true label with
    probability imputation_accuracy.
    """
    rng = _trial_rng(config, trial_index)
    t_max = config.t_max
    agree_curve = np.linspace(0.6, 1.0, t_max)
    conf_base = np.linspace(0.25, 0.8, t_max)

    def draw(size, with_true, with_imputed, tag):
        y = rng.integers(0, 2, size=size)
        full_ok = rng.uniform(size=size) < config.full_accuracy
        full_pred = np.where(full_ok, y, 1 - y)
        agree = rng.uniform(size=(size, t_max)) < agree_curve[None, :]
        agree[:, -1] = True
        early = np.where(agree, full_pred[:, None], 1 - full_pred[:, None])
        noise = rng.uniform(-0.15, 0.15, size=(size, t_max))
        conf = np.clip(conf_base[None, :] + 0.18 * agree - 0.18 * ~agree + noise, 0.0, 1.0)
        imputed = None
        if with_imputed:
            keep = rng.uniform(size=size) < config.imputation_accuracy
            imputed = np.where(keep, y, 1 - y)
        return EtscDataset(
            confidence=conf,
            early_pred=early,
            full_pred=full_pred,
            true_label=y if with_true else None,
            imputed_label=imputed,
            sample_ids=tuple(f"{tag}{i}" for i in range(size)),
        )

    return {
        "stage1": draw(config.n_stage1, True, False, "a"),
        "stage2": draw(config.n_labeled, True, True, "b"),
        "unlabeled": draw(config.n_unlabeled, False, True, "u"),
        "test": draw(config.n_test, True, False, "t"),
    }


def run_etsc_experiment(config, modes, trials):
    """Screen + calibrate per mode, then evaluate on the held-out test set.

    Reports per mode: per-trial violation of the conditional gap risk at
    any t >= t0 (with the caller applying its own slack), mean halt curve,
    and the calibrated vectors.
    """
    spec = EtscRiskSpec(
        alpha=config.alpha,
        delta=config.delta,
        split=BudgetSplit(config.delta1, config.delta2),
    )
    out = {mode: {"max_risk": [], "halt_curves": [], "vectors": []} for mode in modes}
    chash = config_hash(config)
    for trial in range(trials):
        datasets = generate_etsc_scenario(config, trial)
        eta = candidate_screening(datasets["stage1"], spec)
        for mode in modes:
            q = stage2_calibrate(datasets["stage2"], datasets["unlabeled"], eta, spec, mode=mode)
            report = evaluate_rule(datasets["test"], q)
            risks = [r for r in report["conditional_risk"] if r is not None]
            out[mode]["max_risk"].append(max(risks) if risks else 0.0)
            out[mode]["halt_curves"].append(report["halt_curve"])
            out[mode]["vectors"].append(list(q))
    for mode in modes:
        curves = np.array(out[mode]["halt_curves"])
        out[mode]["mean_halt_curve"] = curves.mean(axis=0).tolist()
        out[mode]["config_hash"] = chash
    return out


def binomial_cdf_summation(n, k, p):
    """Direct log-space summation oracle for P(Binom(n, p) <= k)."""
    if k >= n:
        return 1.0
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    def tail(js):
        log_terms = (
            special.gammaln(n + 1)
            - special.gammaln(js + 1)
            - special.gammaln(n - js + 1)
            + js * np.log(p)
            + (n - js) * np.log1p(-p)
        )
        return float(np.exp(special.logsumexp(log_terms)))

    # sum the tail that excludes the mean, so the summed mass is the
    # smaller one and absolute error stays below 1e-12 near both 0 and 1
    if k < n * p:
        return min(1.0, tail(np.arange(k + 1)))
    return max(0.0, 1.0 - tail(np.arange(k + 1, n + 1)))


def brute_force_cp_oracle(count, delta):
    """Independent grid-scan oracle for the Clopper-Pearson UCB.

    Scans R over [0, 1] down to a 1e-6 resolution, refining around the
    crossing (the CDF is nonincreasing in R, so refinement is exact).
    Used only in tests against clopper_pearson_ucb.
    """
    n, k = count.trials, count.failures
    if k == n:
        return 1.0
    lo, hi = 0.0, 1.0
    for step in (1e-2, 1e-4, 1e-6):
        grid = np.arange(lo, min(hi + step, 1.0 + step / 2), step)
        sup = lo
        for r in grid:
            if binomial_cdf_summation(n, k, min(r, 1.0)) >= delta:
                sup = r
            else:
                break
        lo, hi = sup, min(sup + step, 1.0)
    return float(lo)
