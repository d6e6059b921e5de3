"""Fixed-sequence-testing calibration over an ordered parameter grid.

Walks the grid in the caller-supplied order, computes a delta-level UCB
per grid point, and returns the last point whose UCB is strictly below
alpha. Stopping at the first failure controls the family-wise error rate
at delta without any multiplicity correction.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundedSample, UcbSpec, ucb

__all__ = [
    "ParameterGrid",
    "LossTable",
    "RiskSpec",
    "CalibrationOutcome",
    "empirical_risk",
    "fixed_sequence_calibrate",
    "labeled_rcps",
    "load_loss_table",
    "save_loss_table",
]


@dataclass(frozen=True)
class ParameterGrid:
    """Ordered grid of parameter labels; the order is the testing order."""

    labels: tuple
    values: tuple = None

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise ValueError("grid must contain at least one point")
        if len(set(labels)) != len(labels):
            raise ValueError("grid points must be distinct")
        if self.values is not None:
            values = tuple(float(v) for v in self.values)
            if len(values) != len(labels):
                raise ValueError("values must match labels in length")
            object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class LossTable:
    """Per-sample losses in [0, 1], one column per grid point in order."""

    losses: np.ndarray
    grid: ParameterGrid
    sample_ids: tuple = None

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=np.float64)
        if losses.ndim != 2:
            raise ValueError("losses must be a 2-d (samples x grid) matrix")
        object.__setattr__(self, "losses", losses)
        if losses.shape[1] != len(self.grid):
            raise ValueError("column count must match the grid")
        if losses.shape[0] < 1:
            raise ValueError("loss table must contain at least one sample")
        if losses.min() < 0.0 or losses.max() > 1.0:
            raise ValueError("losses must lie in [0, 1]")
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != losses.shape[0]:
                raise ValueError("sample_ids must match the row count")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self):
        return self.losses.shape[0]

    def column(self, m):
        return self.losses[:, m]


@dataclass(frozen=True)
class RiskSpec:
    alpha: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class CalibrationOutcome:
    """Result of a fixed-sequence walk.

    ``selected`` is None on abstention (first grid point already failed);
    ``stop_index`` counts the grid points that passed before the first
    failure; ``ucb_trace`` covers exactly the visited points.
    """

    selected: str | None
    stop_index: int
    ucb_trace: tuple
    method: str
    alpha: float
    delta: float
    asymptotic: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def abstained(self):
        return self.selected is None

    def to_dict(self):
        out = {
            "selected": self.selected,
            "stop_index": self.stop_index,
            "ucb_trace": list(self.ucb_trace),
            "method": self.method,
            "alpha": self.alpha,
            "delta": self.delta,
            "asymptotic": self.asymptotic,
        }
        out.update(self.diagnostics)
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def empirical_risk(table, grid_index):
    """Column mean of the loss table."""
    if not 0 <= grid_index < len(table.grid):
        raise IndexError(f"grid index {grid_index} out of range")
    return float(table.column(grid_index).mean())


def _walk(grid, column_ucb, alpha):
    """Shared stopping rule: continue while UCB < alpha, strictly."""
    trace = []
    stop = 0
    for m in range(len(grid)):
        bound = column_ucb(m)
        trace.append(bound)
        if bound < alpha:
            stop = m + 1
        else:
            break
    selected = grid.labels[stop - 1] if stop >= 1 else None
    return selected, stop, tuple(trace)


def fixed_sequence_calibrate(table, spec, ucb_spec, support=(0.0, 1.0)):
    """Calibrate on labeled losses with the chosen bound at level delta.

    The UCB is recomputed per column lazily, honoring early stopping;
    columns after the first failure are never visited.
    """

    def column_ucb(m):
        sample = BoundedSample(table.column(m), support[0], support[1])
        return ucb(sample, ucb_spec)

    selected, stop, trace = _walk(table.grid, column_ucb, spec.alpha)
    return CalibrationOutcome(
        selected=selected,
        stop_index=stop,
        ucb_trace=trace,
        method=ucb_spec.method,
        alpha=spec.alpha,
        delta=ucb_spec.delta,
        asymptotic=ucb_spec.asymptotic,
    )


def labeled_rcps(table, spec, method=None):
    """Labeled-data-only RCPS baseline.

    Defaults to the exact Clopper-Pearson bound for binary loss tables and
    WSR otherwise.
    """
    if method is None:
        binary = np.all(np.isin(table.losses, (0.0, 1.0)))
        method = "clopper_pearson" if binary else "wsr"
    return fixed_sequence_calibrate(table, spec, UcbSpec(method, spec.delta))


def load_loss_table(path):
    """Read the CSV format: header `sample_id,<label>,...`, decimal reals.

    Column order defines the grid traversal order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample_id" or len(header) < 2:
            raise ValueError(f"{path}: expected header 'sample_id,<grid labels...>'")
        labels = header[1:]
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: wrong number of fields")
            ids.append(row[0])
            rows.append([float(x) for x in row[1:]])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    grid = ParameterGrid(labels=tuple(labels))
    return LossTable(np.array(rows), grid, sample_ids=tuple(ids))


def save_loss_table(table, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + list(table.grid.labels))
        ids = table.sample_ids or [str(i) for i in range(table.n_samples)]
        for sid, row in zip(ids, table.losses):
            writer.writerow([sid] + [repr(float(x)) for x in row])
