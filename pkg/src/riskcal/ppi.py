"""Semi-supervised risk estimation and calibration.

Combines a small labeled loss table with a large table of model-imputed
losses: the prediction-powered point estimate, its i.i.d. block
decomposition for concentration bounds, the general-loss calibrator, the
specialized binary-loss calibrator (clipped rectifier + error-budget
split), and data-driven power tuning of the unlabeled-data weight.
"""

from dataclasses import dataclass

import numpy as np

from .bounds import BinomialCount, BoundedSample, UcbSpec, clopper_pearson_ucb, ucb
from .rcps import CalibrationOutcome, LossTable, _walk

__all__ = [
    "SemiSupervisedLosses",
    "BlockPlan",
    "BudgetSplit",
    "PowerTuning",
    "pp_risk",
    "block_decompose",
    "lambda_star_estimate",
    "clipped_rectifier_risk",
    "clipped_rectifier_count",
    "ss_general_calibrate",
    "ss_binary_calibrate",
    "naive_augmented_calibrate",
]

_BINARY_SNAP = 1e-9


@dataclass(frozen=True)
class SemiSupervisedLosses:
    """Labeled-true, labeled-imputed, and unlabeled-imputed loss tables.

    The two labeled tables must share row identities; all three share one
    grid and column order.
    """

    labeled_true: LossTable
    labeled_imputed: LossTable
    unlabeled_imputed: LossTable

    def __post_init__(self):
        lt, li, ui = self.labeled_true, self.labeled_imputed, self.unlabeled_imputed
        if lt.grid.labels != li.grid.labels or lt.grid.labels != ui.grid.labels:
            raise ValueError("all three tables must share the same grid")
        if lt.n_samples != li.n_samples:
            raise ValueError("labeled tables must have the same row count")
        if lt.sample_ids is not None and li.sample_ids is not None:
            if lt.sample_ids != li.sample_ids:
                raise ValueError("labeled tables disagree on sample identities")

    @property
    def grid(self):
        return self.labeled_true.grid

    @property
    def n(self):
        return self.labeled_true.n_samples

    @property
    def n_unlabeled(self):
        return self.unlabeled_imputed.n_samples


@dataclass(frozen=True)
class BlockPlan:
    """Contiguous assignment of unlabeled rows to the n labeled rows.

    Block i covers unlabeled rows [i * block_size, (i+1) * block_size); the
    tail that does not fill a block is dropped. An optional seeded shuffle
    permutes the unlabeled rows before blocking (off by default).
    """

    n_labeled: int
    n_unlabeled: int
    shuffle_seed: int | None = None

    def __post_init__(self):
        if self.n_unlabeled < self.n_labeled:
            raise ValueError(
                "need at least as many unlabeled as labeled rows "
                f"(n={self.n_labeled}, N={self.n_unlabeled})"
            )

    @property
    def block_size(self):
        return self.n_unlabeled // self.n_labeled

    @property
    def used_unlabeled(self):
        return self.n_labeled * self.block_size

    @property
    def dropped_tail(self):
        return self.n_unlabeled - self.used_unlabeled

    def arrange(self, column):
        """Unlabeled column values reshaped to (n_labeled, block_size)."""
        if self.shuffle_seed is not None:
            perm = np.random.default_rng(self.shuffle_seed).permutation(len(column))
            column = column[perm]
        return column[: self.used_unlabeled].reshape(self.n_labeled, self.block_size)


@dataclass(frozen=True)
class BudgetSplit:
    """delta = delta1 (unlabeled bound) + delta2 (rectifier bound)."""

    delta1: float
    delta2: float

    def __post_init__(self):
        if self.delta1 <= 0.0 or self.delta2 <= 0.0:
            raise ValueError("both budget parts must be positive")
        if self.total >= 1.0:
            raise ValueError("delta1 + delta2 must be below 1")

    @property
    def total(self):
        return self.delta1 + self.delta2

    def check_total(self, delta):
        if abs(self.total - delta) > 1e-12:
            raise ValueError(
                f"delta1 + delta2 = {self.total} does not match delta = {delta}"
            )


@dataclass(frozen=True)
class PowerTuning:
    """How the unlabeled-data weight lambda is chosen.

    fixed_one keeps lambda = 1 (finite-sample guarantees); clt_inline
    estimates the variance-minimizing lambda on the same data (asymptotic
    only); wsr_split holds out a fraction of both labeled and unlabeled
    rows to estimate lambda, then builds the bound on the remainder.
    """

    mode: str = "fixed_one"
    tuning_fraction: float = 0.1

    def __post_init__(self):
        if self.mode not in ("fixed_one", "clt_inline", "wsr_split"):
            raise ValueError(f"unknown power tuning mode {self.mode!r}")
        if not 0.0 < self.tuning_fraction < 1.0:
            raise ValueError("tuning_fraction must be in (0, 1)")


def pp_risk(data, grid_index, lam=1.0):
    """Prediction-powered risk: unlabeled mean plus labeled rectifier.

    lam * mean(imputed unlabeled) + mean(true labeled)
    - lam * mean(imputed labeled). Unbiased for the true risk at any fixed
    lam, regardless of imputation quality.
    """
    ru = data.unlabeled_imputed.column(grid_index).mean()
    rl = data.labeled_true.column(grid_index).mean()
    rli = data.labeled_imputed.column(grid_index).mean()
    return float(lam * ru + rl - lam * rli)


def _w_support(lam):
    return (-abs(lam), 1.0 + abs(lam))


def block_decompose(data, grid_index, plan=None, lam=1.0):
    """Rewrite the prediction-powered sum as n i.i.d. terms.

    W_i = lam * (block mean of unlabeled imputed losses) + L_i
    - lam * imputed L_i, with declared support [-|lam|, 1 + |lam|]. The
    mean of W equals pp_risk restricted to the unlabeled rows the plan
    actually uses.
    """
    if plan is None:
        plan = BlockPlan(data.n, data.n_unlabeled)
    blocks = plan.arrange(data.unlabeled_imputed.column(grid_index))
    w = (
        lam * blocks.mean(axis=1)
        + data.labeled_true.column(grid_index)
        - lam * data.labeled_imputed.column(grid_index)
    )
    lo, hi = _w_support(lam)
    return BoundedSample(w, lo, hi)


def lambda_star_estimate(data, grid_index, n_for_ratio=None, N_for_ratio=None):
    """Variance-minimizing unlabeled-data weight, estimated on labeled rows.

    Cov(L, imputed L) / ((1 + n/N) * Var(imputed L)), with unbiased (n-1)
    estimators. Returns 0 when the imputed column is degenerate: a constant
    imputed loss carries no usable signal.
    """
    if data.n < 2:
        raise ValueError("lambda estimation requires at least 2 labeled rows")
    n = data.n if n_for_ratio is None else n_for_ratio
    N = data.n_unlabeled if N_for_ratio is None else N_for_ratio
    lt = data.labeled_true.column(grid_index)
    li = data.labeled_imputed.column(grid_index)
    var_li = float(li.var(ddof=1))
    if var_li == 0.0:
        return 0.0
    cov = float(np.cov(lt, li, ddof=1)[0, 1])
    return cov / ((1.0 + n / N) * var_li)


def _require_binary(column, what):
    snapped = np.round(column)
    if np.max(np.abs(column - snapped)) > _BINARY_SNAP:
        raise ValueError(f"{what} must be binary-valued")
    return snapped


def clipped_rectifier_count(data, grid_index):
    """Integer count of labeled rows with true loss 1 but imputed loss 0."""
    lt = _require_binary(data.labeled_true.column(grid_index), "labeled true losses")
    li = _require_binary(data.labeled_imputed.column(grid_index), "labeled imputed losses")
    return int(np.maximum(lt - li, 0.0).sum())


def clipped_rectifier_risk(data, grid_index):
    """Clipped rectifier rate: mean of max(L - imputed L, 0) over labeled rows.

    Upper-bounds the raw rectifier, so the clipped target conservatively
    upper-bounds the true risk.
    """
    return clipped_rectifier_count(data, grid_index) / data.n


def _tuning_split(data, fraction):
    """Deterministic prefix holdout of both labeled and unlabeled rows."""
    n_t = int(np.ceil(fraction * data.n))
    N_t = int(np.ceil(fraction * data.n_unlabeled))
    if n_t < 2:
        raise ValueError("tuning split needs at least 2 labeled rows")
    if data.n - n_t < 1 or data.n_unlabeled - N_t < 1:
        raise ValueError("tuning split leaves no rows for the bound")

    def subset(table, rows):
        ids = None
        if table.sample_ids is not None:
            ids = tuple(table.sample_ids[i] for i in rows)
        return LossTable(table.losses[rows], table.grid, sample_ids=ids)

    head_l = range(0, n_t)
    tail_l = range(n_t, data.n)
    head_u = range(0, N_t)
    tail_u = range(N_t, data.n_unlabeled)
    tune = SemiSupervisedLosses(
        subset(data.labeled_true, head_l),
        subset(data.labeled_imputed, head_l),
        subset(data.unlabeled_imputed, head_u),
    )
    rest = SemiSupervisedLosses(
        subset(data.labeled_true, tail_l),
        subset(data.labeled_imputed, tail_l),
        subset(data.unlabeled_imputed, tail_u),
    )
    return tune, rest


def ss_general_calibrate(data, spec, ucb_method="wsr", tuning=None, shuffle_seed=None):
    """Semi-supervised RCPS for a general bounded loss.

    Per grid column, forms the block decomposition and bounds its mean with
    the chosen concentration bound, then applies the fixed-sequence
    stopping rule. WSR keeps the finite-sample guarantee; CLT is asymptotic
    only and is flagged as such in the outcome.
    """
    if tuning is None:
        tuning = PowerTuning("fixed_one")
    if ucb_method not in ("wsr", "wsr_scaled", "clt"):
        raise ValueError(f"unsupported UCB method {ucb_method!r}")
    if tuning.mode == "clt_inline" and ucb_method != "clt":
        raise ValueError("clt_inline tuning requires the clt bound")
    if tuning.mode == "wsr_split" and ucb_method == "clt":
        raise ValueError("wsr_split tuning requires a finite-sample bound")

    if tuning.mode == "wsr_split":
        tune_data, bound_data = _tuning_split(data, tuning.tuning_fraction)
    else:
        tune_data, bound_data = data, data

    plan = BlockPlan(bound_data.n, bound_data.n_unlabeled, shuffle_seed=shuffle_seed)
    ucb_spec = UcbSpec(ucb_method, spec.delta)
    lambdas = []

    def column_ucb(m):
        if tuning.mode == "fixed_one":
            lam = 1.0
        else:
            # the n/N ratio reflects the data the bound is built on
            lam = lambda_star_estimate(
                tune_data, m, n_for_ratio=bound_data.n, N_for_ratio=bound_data.n_unlabeled
            )
        lambdas.append(lam)
        return ucb(block_decompose(bound_data, m, plan, lam), ucb_spec)

    selected, stop, trace = _walk(data.grid, column_ucb, spec.alpha)
    return CalibrationOutcome(
        selected=selected,
        stop_index=stop,
        ucb_trace=trace,
        method=f"ss_general_{ucb_method}",
        alpha=spec.alpha,
        delta=spec.delta,
        asymptotic=(ucb_method == "clt"),
        diagnostics={
            "lambda_mode": tuning.mode,
            "lambda_per_column": lambdas,
            "block_size": plan.block_size,
            "dropped_tail": plan.dropped_tail,
        },
    )


def ss_binary_calibrate(data, alpha, split):
    """Semi-supervised RCPS specialized to binary losses.

    Per column, sums an exact Clopper-Pearson UCB on the unlabeled imputed
    risk at delta1 with one on the clipped rectifier rate at delta2; the
    sum is a valid UCB of the risk at delta1 + delta2 by the union bound.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    N = data.n_unlabeled

    def column_ucb(m):
        unl = _require_binary(data.unlabeled_imputed.column(m), "unlabeled imputed losses")
        k_u = BinomialCount(trials=N, failures=int(unl.sum()))
        k_r = BinomialCount(trials=data.n, failures=clipped_rectifier_count(data, m))
        return clopper_pearson_ucb(k_u, split.delta1) + clopper_pearson_ucb(
            k_r, split.delta2
        )

    selected, stop, trace = _walk(data.grid, column_ucb, alpha)
    return CalibrationOutcome(
        selected=selected,
        stop_index=stop,
        ucb_trace=trace,
        method="ss_binary_cp",
        alpha=alpha,
        delta=split.total,
        asymptotic=False,
        diagnostics={"delta1": split.delta1, "delta2": split.delta2},
    )


def naive_augmented_calibrate(data, spec):
    """Invalidity baseline: pool true labeled with imputed unlabeled losses.

    Treats the pooled n + N values as one i.i.d. sample and runs labeled
    RCPS with Clopper-Pearson. The guarantee does NOT hold when the
    imputations are biased; the outcome is marked unsafe.
    """

    def column_ucb(m):
        pooled = np.concatenate(
            [
                _require_binary(data.labeled_true.column(m), "labeled true losses"),
                _require_binary(
                    data.unlabeled_imputed.column(m), "unlabeled imputed losses"
                ),
            ]
        )
        count = BinomialCount(trials=pooled.size, failures=int(pooled.sum()))
        return clopper_pearson_ucb(count, spec.delta)

    selected, stop, trace = _walk(data.grid, column_ucb, spec.alpha)
    return CalibrationOutcome(
        selected=selected,
        stop_index=stop,
        ucb_trace=trace,
        method="naive_augmented_cp",
        alpha=spec.alpha,
        delta=spec.delta,
        asymptotic=False,
        diagnostics={"unsafe": True},
    )
