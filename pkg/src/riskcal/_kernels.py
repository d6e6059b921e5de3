"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set RISKCAL_NO_NUMBA=1 to force the numpy path (useful for debugging and
for the benchmark in benchmarks/benchmark_kernels.py). The two paths are
bit-identical on the outputs they produce; tests assert this.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("RISKCAL_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "capital_max",
    "wsr_bisect",
    "halt_times",
]


def _capital_max_np(w, nu, r, thresh):
    # max_i prod_{j<=i} (1 - nu_j * (w_j - r)); factors are >= 0 for r in [A, B]
    factors = 1.0 - nu * (w - r)
    with np.errstate(over="ignore"):
        return float(np.max(np.cumprod(factors)))


def _wsr_bisect_np(w, nu, lo, hi, thresh, tol, max_iter):
    if _capital_max_np(w, nu, hi, thresh) <= thresh:
        return hi
    if _capital_max_np(w, nu, lo, thresh) > thresh:
        return lo
    # invariant: lo not rejected, hi rejected
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if _capital_max_np(w, nu, mid, thresh) > thresh:
            hi = mid
        else:
            lo = mid
    return hi


def _halt_times_np(conf, thresholds):
    n, t_max = conf.shape
    hit = conf >= thresholds[None, :]
    any_hit = hit.any(axis=1)
    first = hit.argmax(axis=1) + 1
    out = np.where(any_hit, first, t_max)
    return out.astype(np.int64)


if USE_NUMBA:

    @njit(cache=True)
    def _capital_max_nb(w, nu, r, thresh):
        k = 1.0
        best = k
        for j in range(w.shape[0]):
            k *= 1.0 - nu[j] * (w[j] - r)
            if k > best:
                best = k
            if best > thresh:
                # early exit: rejection decided
                return best
        return best

    @njit(cache=True)
    def _wsr_bisect_nb(w, nu, lo, hi, thresh, tol, max_iter):
        if _capital_max_nb(w, nu, hi, thresh) <= thresh:
            return hi
        if _capital_max_nb(w, nu, lo, thresh) > thresh:
            return lo
        for _ in range(max_iter):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if _capital_max_nb(w, nu, mid, thresh) > thresh:
                hi = mid
            else:
                lo = mid
        return hi

    @njit(cache=True)
    def _halt_times_nb(conf, thresholds):
        n, t_max = conf.shape
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            out[i] = t_max
            for t in range(t_max):
                if conf[i, t] >= thresholds[t]:
                    out[i] = t + 1
                    break
        return out


def capital_max(w, nu, r, thresh=np.inf):
    """Maximum of the betting capital process at candidate mean ``r``.

    The numba path exits early once the threshold is crossed; callers must
    only use the return value for comparison against ``thresh``.
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    if USE_NUMBA:
        return _capital_max_nb(w, nu, float(r), float(thresh))
    return _capital_max_np(w, nu, float(r), float(thresh))


def wsr_bisect(w, nu, lo, hi, thresh, tol, max_iter=200):
    """Smallest rejected candidate mean in [lo, hi], located by bisection.

    Returns ``hi`` when nothing in the interval is rejected. The rejection
    region is an up-set because every capital factor is nondecreasing in r.
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    args = (w, nu, float(lo), float(hi), float(thresh), float(tol), max_iter)
    if USE_NUMBA:
        return float(_wsr_bisect_nb(*args))
    return float(_wsr_bisect_np(*args))


def halt_times(conf, thresholds):
    """1-indexed first crossing time per row, capped at t_max."""
    conf = np.ascontiguousarray(conf, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    if USE_NUMBA:
        return _halt_times_nb(conf, thresholds)
    return _halt_times_np(conf, thresholds)
