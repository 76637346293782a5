"""Slow, direct reference implementations used by the tests."""

import itertools
import math

import numpy as np
from scipy import stats


def sse(y):
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    m = math.fsum(y) / y.size
    return math.fsum((y - m) ** 2)


def best_threshold(x, y, min_child=1):
    """(cut, sse) minimising the child SSE; missing x (NaN) joins the right child.

    Every midpoint of consecutive distinct observed values is tried
    explicitly. Candidates within 1e-9 of the node SSE of the minimum count
    as tied and the smallest cut wins.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = np.unique(x[~np.isnan(x)])
    cands = []
    for a, b in zip(vals[:-1], vals[1:]):
        cut = (a + b) / 2
        left = x <= cut
        if left.sum() < min_child or (~left).sum() < min_child:
            continue
        cands.append((cut, sse(y[left]) + sse(y[~left])))
    if not cands:
        return None
    best = min(s for _, s in cands)
    tol = 1e-9 * sse(y) if np.ptp(y) > 0 else 0.0
    return next(c for c in cands if c[1] <= best + tol)


def best_subset(codes, y, min_child=1):
    """(sse, left mask) minimising child SSE over every two-way partition of the levels."""
    codes = np.asarray(codes)
    y = np.asarray(y, dtype=float)
    levels = np.unique(codes)
    best = None
    for r in range(1, levels.size):
        for left_levels in itertools.combinations(levels, r):
            left = np.isin(codes, left_levels)
            if left.sum() < min_child or (~left).sum() < min_child:
                continue
            s = sse(y[left]) + sse(y[~left])
            if best is None or s < best[0]:
                best = (s, left)
    return best


def slope_pvalue(x, y):
    ok = ~np.isnan(x)
    x, y = x[ok], y[ok]
    if x.size < 3 or np.ptp(x) == 0:
        return math.nan
    return float(stats.linregress(x, y).pvalue)


def anova_pvalue(codes, y):
    groups = [y[codes == c] for c in np.unique(codes)]
    if len(groups) < 2:
        return math.nan
    return float(stats.f_oneway(*groups).pvalue)
