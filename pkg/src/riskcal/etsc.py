"""Early time-series classification calibration.

Tunes a per-timestep confidence threshold vector so that the accuracy gap
between full-sequence and early-exit predictions is controlled
conditionally on halting by time t. Two-stage scheme: a heuristic
candidate screen on one labeled split, then a semi-supervised
fixed-sequence calibration over reveal-from-the-end threshold vectors.
"""

import json
from dataclasses import dataclass

import numpy as np

from ._kernels import halt_times as _halt_times_kernel
from .bounds import BinomialCount, BoundedSample, clopper_pearson_ucb, clt_ucb, wsr_ucb
from .ppi import BudgetSplit

__all__ = [
    "EtscDataset",
    "EtscRiskSpec",
    "STAGE2_MODES",
    "halt_times",
    "gap_losses",
    "conditional_empirical_risk",
    "candidate_screening",
    "stage2_calibrate",
    "halt_curve",
    "evaluate_rule",
    "check_disjoint",
    "thresholds_to_json",
    "thresholds_from_json",
    "load_dataset",
    "save_dataset",
]

STAGE2_MODES = ("binary_cp", "general_wsr", "general_clt", "labeled_only")


@dataclass(frozen=True)
class EtscDataset:
    """Per-sample confidence trajectories and predictions.

    confidence and early_pred are (n, t_max); full_pred is (n,). true_label
    is required to use the set as labeled data, imputed_label to use it as
    unlabeled data.
    """

    confidence: np.ndarray
    early_pred: np.ndarray
    full_pred: np.ndarray
    true_label: np.ndarray = None
    imputed_label: np.ndarray = None
    sample_ids: tuple = None

    def __post_init__(self):
        conf = np.asarray(self.confidence, dtype=np.float64)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "early_pred", np.asarray(self.early_pred))
        object.__setattr__(self, "full_pred", np.asarray(self.full_pred))
        if conf.ndim != 2 or conf.shape[1] < 1:
            raise ValueError("confidence must be (n_samples, t_max)")
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise ValueError("confidences must lie in [0, 1]")
        if self.early_pred.shape != conf.shape:
            raise ValueError("early_pred must match confidence in shape")
        if self.full_pred.shape != (conf.shape[0],):
            raise ValueError("full_pred must have one entry per sample")
        for name in ("true_label", "imputed_label"):
            lab = getattr(self, name)
            if lab is not None:
                lab = np.asarray(lab)
                if lab.shape != (conf.shape[0],):
                    raise ValueError(f"{name} must have one entry per sample")
                object.__setattr__(self, name, lab)
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != conf.shape[0]:
                raise ValueError("sample_ids must match the sample count")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self):
        return self.confidence.shape[0]

    @property
    def t_max(self):
        return self.confidence.shape[1]

    def labels(self, source):
        if source == "true":
            lab = self.true_label
        elif source == "imputed":
            lab = self.imputed_label
        else:
            raise ValueError(f"unknown label source {source!r}")
        if lab is None:
            raise ValueError(f"dataset carries no {source} labels")
        return lab


@dataclass(frozen=True)
class EtscRiskSpec:
    """Levels and screening resolution for the two-stage procedure."""

    alpha: float
    delta: float
    split: BudgetSplit = None
    screen_resolution: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 < self.screen_resolution < 1.0:
            raise ValueError("screen_resolution must be in (0, 1)")
        if self.split is not None:
            self.split.check_total(self.delta)


def _check_thresholds(q, t_max):
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (t_max,):
        raise ValueError(f"threshold vector must have length {t_max}")
    finite = q[np.isfinite(q)]
    if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
        raise ValueError("finite thresholds must lie in [0, 1]")
    return q


def halt_times(dataset, q):
    """1-indexed halt time per sample: first t with confidence >= q_t,
    capped at t_max. Ties halt (the rule uses >=)."""
    q = _check_thresholds(q, dataset.t_max)
    return _halt_times_kernel(dataset.confidence, q)


def gap_losses(dataset, label_source, q, tau=None):
    """Binary accuracy-gap loss per sample at the rule's halt time.

    1 when the full-sequence prediction matches the label but the early
    prediction at the halt time does not; 0 otherwise (clipped).
    """
    if tau is None:
        tau = halt_times(dataset, q)
    labels = dataset.labels(label_source)
    early_at_tau = dataset.early_pred[np.arange(dataset.n), tau - 1]
    full_ok = labels == dataset.full_pred
    early_ok = labels == early_at_tau
    return (full_ok & ~early_ok).astype(np.float64)


def conditional_empirical_risk(dataset, label_source, q, t, tau=None, losses=None):
    """Mean gap loss over samples that halted by t; None when none did."""
    if not 1 <= t <= dataset.t_max:
        raise ValueError(f"t must be in [1, {dataset.t_max}]")
    if tau is None:
        tau = halt_times(dataset, q)
    halted = tau <= t
    if not halted.any():
        return None
    if losses is None:
        losses = gap_losses(dataset, label_source, q, tau=tau)
    return float(losses[halted].mean())


def _screen_grid(resolution):
    steps = int(np.floor(1.0 / resolution + 1e-9))
    xs = [i * resolution for i in range(steps + 1)]
    if xs[-1] < 1.0 - 1e-12:
        xs.append(1.0)
    return xs


def candidate_screening(stage1, spec):
    """Stage 1: heuristic per-timestep threshold candidates.

    For each t in order, sweeps the threshold grid upward and keeps the
    first value whose conditional empirical gap risk at t is <= alpha.
    No guarantee is attached to the result.
    """
    if stage1.n < 1:
        raise ValueError("stage-1 set must be nonempty")
    stage1.labels("true")
    eta = np.full(stage1.t_max, np.inf)
    for t in range(1, stage1.t_max + 1):
        trial = eta.copy()
        for xi in _screen_grid(spec.screen_resolution):
            trial[t - 1] = xi
            tau = halt_times(stage1, trial)
            halted = tau <= t
            if not halted.any():
                eta[t - 1] = np.inf
                break
            losses = gap_losses(stage1, "true", trial, tau=tau)
            if float(losses[halted].mean()) <= spec.alpha:
                eta[t - 1] = xi
                break
    return eta


def _binary_column_ucb(labeled, unlabeled, q, t_prime, split):
    """Sum of exact CP bounds on the unlabeled gap risk and the clipped
    rectifier, conditioned on halting by t_prime. Empty J is a failure:
    the unlabeled bound is undefined on zero trials."""
    tau_u = halt_times(unlabeled, q)
    in_j = tau_u <= t_prime
    n_j = int(in_j.sum())
    if n_j == 0:
        return None
    loss_u = gap_losses(unlabeled, "imputed", q, tau=tau_u)
    cp_u = clopper_pearson_ucb(
        BinomialCount(trials=n_j, failures=int(loss_u[in_j].sum())), split.delta1
    )
    tau_l = halt_times(labeled, q)
    in_i = tau_l <= t_prime
    n_i = int(in_i.sum())
    loss_true = gap_losses(labeled, "true", q, tau=tau_l)
    loss_imp = gap_losses(labeled, "imputed", q, tau=tau_l)
    clipped = np.maximum(loss_true - loss_imp, 0.0)
    cp_r = clopper_pearson_ucb(
        BinomialCount(trials=n_i, failures=int(clipped[in_i].sum())), split.delta2
    )
    return cp_u + cp_r


def _general_column_ucb(labeled, unlabeled, q, t_prime, delta, bound):
    """Block-decomposed prediction-powered UCB of the conditional gap risk."""
    tau_l = halt_times(labeled, q)
    in_i = tau_l <= t_prime
    n_i = int(in_i.sum())
    tau_u = halt_times(unlabeled, q)
    in_j = tau_u <= t_prime
    n_j = int(in_j.sum())
    if n_j < n_i:
        # block size would be zero
        return None
    loss_u = gap_losses(unlabeled, "imputed", q, tau=tau_u)[in_j]
    loss_true = gap_losses(labeled, "true", q, tau=tau_l)[in_i]
    loss_imp = gap_losses(labeled, "imputed", q, tau=tau_l)[in_i]
    block = n_j // n_i
    blocks = loss_u[: n_i * block].reshape(n_i, block)
    w = BoundedSample(blocks.mean(axis=1) + loss_true - loss_imp, -1.0, 2.0)
    if bound == "wsr":
        return wsr_ucb(w, delta)
    if w.n < 2:
        return None
    return clt_ucb(w, delta)


def _labeled_column_ucb(labeled, q, t_prime, delta):
    tau_l = halt_times(labeled, q)
    in_i = tau_l <= t_prime
    n_i = int(in_i.sum())
    losses = gap_losses(labeled, "true", q, tau=tau_l)
    return clopper_pearson_ucb(
        BinomialCount(trials=n_i, failures=int(losses[in_i].sum())), delta
    )


def stage2_calibrate(labeled_stage2, unlabeled, candidate, spec, mode="binary_cp"):
    """Stage 2: fixed-sequence calibration over threshold vectors.

    The grid reveals one candidate threshold at a time from the last
    timestep backward. A vector is accepted only when the semi-supervised
    UCB of the conditional gap risk is strictly below alpha at every
    t' from the revealed index to t_max; the first failing vector stops
    the walk. Returns the last accepted vector, or all-infinity if none.
    """
    if mode not in STAGE2_MODES:
        raise ValueError(f"unknown stage-2 mode {mode!r}")
    labeled_stage2.labels("true")
    if mode != "labeled_only":
        labeled_stage2.labels("imputed")
        unlabeled.labels("imputed")
        if labeled_stage2.t_max != unlabeled.t_max:
            raise ValueError("labeled and unlabeled sets disagree on t_max")
    if mode == "binary_cp":
        if spec.split is None:
            raise ValueError("binary_cp mode requires a budget split")
    t_max = labeled_stage2.t_max
    candidate = _check_thresholds(candidate, t_max)
    q_hat = np.full(t_max, np.inf)
    for t in range(t_max, 0, -1):
        q = q_hat.copy()
        q[t - 1] = candidate[t - 1]
        ok = True
        for t_prime in range(t, t_max + 1):
            tau_l = halt_times(labeled_stage2, q)
            if not (tau_l <= t_prime).any():
                # conditional risk undefined for every rule from here on
                return q_hat
            if mode == "binary_cp":
                bound = _binary_column_ucb(labeled_stage2, unlabeled, q, t_prime, spec.split)
            elif mode == "labeled_only":
                bound = _labeled_column_ucb(labeled_stage2, q, t_prime, spec.delta)
            else:
                bound = _general_column_ucb(
                    labeled_stage2, unlabeled, q, t_prime, spec.delta, mode.split("_")[1]
                )
            if bound is None or not bound < spec.alpha:
                ok = False
                break
        if not ok:
            return q_hat
        q_hat = q
    return q_hat


def halt_curve(dataset, q):
    """Cumulative halt fraction per timestep; reaches 1 at t_max."""
    tau = halt_times(dataset, q)
    return np.array(
        [float((tau <= t).mean()) for t in range(1, dataset.t_max + 1)]
    )


def evaluate_rule(dataset, q, label_source="true"):
    """Halt curve, conditional gap risk per t, and the first halting time
    observed in this dataset (an empirical stand-in for t0)."""
    tau = halt_times(dataset, q)
    losses = gap_losses(dataset, label_source, q, tau=tau)
    curve = []
    risks = []
    t0 = None
    for t in range(1, dataset.t_max + 1):
        halted = tau <= t
        curve.append(float(halted.mean()))
        if halted.any():
            if t0 is None:
                t0 = t
            risks.append(float(losses[halted].mean()))
        else:
            risks.append(None)
    return {"halt_curve": curve, "conditional_risk": risks, "t0": t0}


def check_disjoint(a, b):
    """Stage-1 / stage-2 sets must not share sample identities."""
    if a.sample_ids is None or b.sample_ids is None:
        raise ValueError("disjointness check requires sample ids on both sets")
    shared = set(a.sample_ids) & set(b.sample_ids)
    if shared:
        raise ValueError(f"stage sets share {len(shared)} sample id(s)")


def thresholds_to_json(q):
    return json.dumps(["inf" if not np.isfinite(v) else float(v) for v in q])


def thresholds_from_json(text):
    raw = json.loads(text)
    return np.array([np.inf if v == "inf" else float(v) for v in raw])


def _dataset_records(dataset):
    ids = dataset.sample_ids or [str(i) for i in range(dataset.n)]
    for i, sid in enumerate(ids):
        rec = {
            "sample_id": sid,
            "confidence": [float(x) for x in dataset.confidence[i]],
            "early_pred": [_jsonable(x) for x in dataset.early_pred[i]],
            "full_pred": _jsonable(dataset.full_pred[i]),
        }
        if dataset.true_label is not None:
            rec["true_label"] = _jsonable(dataset.true_label[i])
        if dataset.imputed_label is not None:
            rec["imputed_label"] = _jsonable(dataset.imputed_label[i])
        yield rec


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def save_dataset(dataset, path):
    with open(path, "w") as fh:
        json.dump(list(_dataset_records(dataset)), fh)


def load_dataset(path):
    with open(path) as fh:
        records = json.load(fh)
    if not records:
        raise ValueError(f"{path}: no samples")
    ids = tuple(str(r["sample_id"]) for r in records)
    conf = np.array([r["confidence"] for r in records], dtype=np.float64)
    early = np.array([r["early_pred"] for r in records])
    full = np.array([r["full_pred"] for r in records])
    true_lab = None
    if all("true_label" in r for r in records):
        true_lab = np.array([r["true_label"] for r in records])
    imp_lab = None
    if all("imputed_label" in r for r in records):
        imp_lab = np.array([r["imputed_label"] for r in records])
    return EtscDataset(
        confidence=conf,
        early_pred=early,
        full_pred=full,
        true_label=true_lab,
        imputed_label=imp_lab,
        sample_ids=ids,
    )
