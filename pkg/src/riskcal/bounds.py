"""One-sided upper confidence bounds for the mean of a bounded sample.

Finite-sample bounds: Hoeffding, exact Clopper-Pearson (binary losses),
and the Waudby-Smith-Ramdas betting bound generalized to an arbitrary
support [A, B]. Asymptotic bound: CLT with a normal quantile. All
functions are pure and hold no state.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from ._kernels import wsr_bisect

__all__ = [
    "BoundedSample",
    "BinomialCount",
    "UcbSpec",
    "UCB_METHODS",
    "hoeffding_ucb",
    "binomial_cdf",
    "clopper_pearson_ucb",
    "count_from_rate",
    "wsr_ucb",
    "wsr_ucb_scaled",
    "clt_ucb",
    "normal_quantile",
    "ucb",
]

CP_TOL = 1e-10
WSR_TOL = 1e-9
MAX_BISECT_ITER = 200
UCB_METHODS = ("hoeffding", "clopper_pearson", "wsr", "wsr_scaled", "clt")


def check_delta(delta):
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if delta < 1e-12:
        # log(1/delta) overflow guard
        raise ValueError(f"delta below 1e-12 is not supported, got {delta}")
    return float(delta)


@dataclass(frozen=True)
class BoundedSample:
    """Ordered sample of reals with a declared support [lo, hi].

    The order matters for the WSR bound (it is a sequential betting bound)
    and is preserved as given.
    """

    values: np.ndarray
    support_lo: float = 0.0
    support_hi: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("sample must be a nonempty 1-d sequence")
        if not self.support_lo < self.support_hi:
            raise ValueError("support must satisfy lo < hi")
        if values.min() < self.support_lo or values.max() > self.support_hi:
            raise ValueError("sample values fall outside the declared support")

    @property
    def n(self):
        return self.values.size

    @property
    def width(self):
        return self.support_hi - self.support_lo


@dataclass(frozen=True)
class BinomialCount:
    """Number of failures out of n independent binary trials."""

    trials: int
    failures: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if not 0 <= self.failures <= self.trials:
            raise ValueError("failures must lie in [0, trials]")


@dataclass(frozen=True)
class UcbSpec:
    """Bound family plus error level; carried through calibration outcomes."""

    method: str
    delta: float = 0.1

    def __post_init__(self):
        if self.method not in UCB_METHODS:
            raise ValueError(f"unknown UCB method {self.method!r}")
        check_delta(self.delta)

    @property
    def asymptotic(self):
        return self.method == "clt"


def hoeffding_ucb(sample, delta):
    """mean + (hi - lo) * sqrt(log(1/delta) / (2n)); may exceed the support."""
    delta = check_delta(delta)
    margin = sample.width * np.sqrt(np.log(1.0 / delta) / (2.0 * sample.n))
    return float(sample.values.mean() + margin)


def binomial_cdf(count, p):
    """P(Binom(trials, p) <= failures) via the regularized incomplete beta.

    Verified against a direct log-space summation oracle in the test suite;
    absolute accuracy is well below 1e-12.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    n, k = count.trials, count.failures
    if k >= n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    # P(X <= k) = I_{1-p}(n - k, k + 1); evaluate whichever tail is small
    # so absolute error stays below 1e-12 on both ends
    sf = float(special.betainc(k + 1, n - k, p))
    if sf < 0.5:
        return 1.0 - sf
    return float(special.betainc(n - k, k + 1, 1.0 - p))


def clopper_pearson_ucb(count, delta):
    """Exact binomial UCB: sup{R in [0,1] : P(Binom(n,R) <= k) >= delta}.

    Located by bisection; binomial_cdf is nonincreasing in R. Returns 1.0
    when every trial failed.
    """
    delta = check_delta(delta)
    if count.failures == count.trials:
        return 1.0
    lo, hi = 0.0, 1.0  # cdf(lo) = 1 >= delta, cdf(hi) = 0 < delta
    for _ in range(MAX_BISECT_ITER):
        if hi - lo <= CP_TOL:
            break
        mid = 0.5 * (lo + hi)
        if binomial_cdf(count, mid) >= delta:
            lo = mid
        else:
            hi = mid
    else:
        raise RuntimeError("Clopper-Pearson bisection did not converge")
    return 0.5 * (lo + hi)


def count_from_rate(trials, rate):
    """Convert an empirical failure rate to a count via ceil(trials * rate).

    Snaps near-integer products to the integer first so representation
    error cannot push the ceiling up by one.
    """
    x = trials * rate
    nearest = round(x)
    if abs(x - nearest) <= 1e-12 * max(1.0, abs(x)):
        x = nearest
    k = int(np.ceil(x))
    return BinomialCount(trials=trials, failures=min(max(k, 0), trials))


def _wsr_betting_rates(values, n, delta, width):
    idx = np.arange(1, n + 1)
    mu = (0.5 + np.cumsum(values)) / (1.0 + idx)
    sig2 = (0.25 + np.cumsum((values - mu) ** 2)) / (1.0 + idx)
    sig2_prev = np.concatenate(([0.25], sig2[:-1]))
    return np.minimum(1.0 / width, np.sqrt(2.0 * np.log(1.0 / delta) / (n * sig2_prev)))


def wsr_ucb(sample, delta):
    """Waudby-Smith-Ramdas betting UCB on the declared support [A, B].

    The capital process K_i(R) = prod_{j<=i} (1 - nu_j (W_j - R)) is a
    nonnegative martingale under mean R; the bound is the smallest R in
    [A, B] with max_i K_i(R) > 1/delta, or B when nothing is rejected.
    """
    delta = check_delta(delta)
    nu = _wsr_betting_rates(sample.values, sample.n, delta, sample.width)
    return wsr_bisect(
        sample.values,
        nu,
        sample.support_lo,
        sample.support_hi,
        1.0 / delta,
        WSR_TOL,
        MAX_BISECT_ITER,
    )


def wsr_ucb_scaled(sample, delta):
    """WSR via linear scaling to [0, 1]; power comparable to wsr_ucb."""
    delta = check_delta(delta)
    scaled = BoundedSample(
        (sample.values - sample.support_lo) / sample.width, 0.0, 1.0
    )
    return sample.support_lo + sample.width * wsr_ucb(scaled, delta)


def normal_quantile(p):
    """Standard normal quantile; validated against tabulated values."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {p}")
    return float(special.ndtri(p))


def clt_ucb(sample, delta):
    """Asymptotic UCB: mean + z_{1-delta} * sqrt(s^2 / n), s^2 unbiased.

    The guarantee is asymptotic only; callers must flag results as such.
    """
    delta = check_delta(delta)
    if sample.n < 2:
        raise ValueError("CLT bound requires at least 2 samples")
    s2 = float(sample.values.var(ddof=1))
    return float(sample.values.mean() + normal_quantile(1.0 - delta) * np.sqrt(s2 / sample.n))


def ucb(sample, spec):
    """Dispatch on a UcbSpec. clopper_pearson requires {lo, hi}-valued data."""
    if spec.method == "hoeffding":
        return hoeffding_ucb(sample, spec.delta)
    if spec.method == "wsr":
        return wsr_ucb(sample, spec.delta)
    if spec.method == "wsr_scaled":
        return wsr_ucb_scaled(sample, spec.delta)
    if spec.method == "clt":
        return clt_ucb(sample, spec.delta)
    if spec.method == "clopper_pearson":
        scaled = (sample.values - sample.support_lo) / sample.width
        snapped = np.round(scaled)
        if np.max(np.abs(scaled - snapped)) > 1e-9:
            raise ValueError("Clopper-Pearson requires binary-valued samples")
        count = BinomialCount(trials=sample.n, failures=int(snapped.sum()))
        return (
            sample.support_lo
            + sample.width * clopper_pearson_ucb(count, spec.delta)
        )
    raise ValueError(f"unknown UCB method {spec.method!r}")
