"""Vectorised numpy versions of the split-search kernels.

Same contracts as the compiled ``_kernels`` module; selected automatically
when the extension is unavailable or ``VGSUBGROUP_PURE_PYTHON=1``.

All scans take rows already sorted by the split variable (non-missing rows
only) and return one candidate SSE per boundary between sorted positions
``k`` and ``k + 1``; inadmissible boundaries are ``inf``. Missing rows are
always counted in the right child.
"""

import numpy as np


def sse_scan(xs, ys, miss_sum, miss_sumsq, miss_n, min_child):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    m = xs.shape[0]
    if m < 2:
        return np.empty(0)
    cs = np.cumsum(ys)
    cq = np.cumsum(ys * ys)
    tot_s = cs[-1] + miss_sum
    tot_q = cq[-1] + miss_sumsq
    cs, cq = cs[:-1], cq[:-1]
    nl = np.arange(1, m, dtype=np.float64)
    nr = (m - nl) + miss_n
    sr = tot_s - cs
    sse = (cq - cs * cs / nl) + ((tot_q - cq) - sr * sr / nr)
    ok = (xs[1:] > xs[:-1]) & (nl >= min_child) & (nr >= min_child)
    return np.where(ok, sse, np.inf)


def gi_scan(xs, ys, ts, miss_sum, miss_sumsq, miss_n, min_child):
    """Child SSE of the arm-mean model ``Y ~ T``, summed over both children.

    ``miss_*`` are length-2 sequences indexed by arm (0 = control).
    Boundaries leaving an arm empty in either child are inadmissible.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ts = np.asarray(ts) != 0
    m = xs.shape[0]
    if m < 2:
        return np.empty(0)
    total = np.zeros(m - 1)
    ok = (xs[1:] > xs[:-1])
    nl_all = np.arange(1, m, dtype=np.float64)
    ok &= (nl_all >= min_child) & ((m - nl_all) + miss_n[0] + miss_n[1] >= min_child)
    for arm, sel in ((0, ~ts), (1, ts)):
        w = sel.astype(np.float64)
        yw = ys * w
        cn = np.cumsum(w)
        cs = np.cumsum(yw)
        cq = np.cumsum(yw * ys)
        tn = cn[-1] + miss_n[arm]
        ts_ = cs[-1] + miss_sum[arm]
        tq = cq[-1] + miss_sumsq[arm]
        cn, cs, cq = cn[:-1], cs[:-1], cq[:-1]
        rn = tn - cn
        rs = ts_ - cs
        ok &= (cn > 0) & (rn > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(cn > 0, cq - cs * cs / np.where(cn > 0, cn, 1.0), 0.0)
            right = np.where(rn > 0, (tq - cq) - rs * rs / np.where(rn > 0, rn, 1.0), 0.0)
        total += left + right
    return np.where(ok, total, np.inf)


def slope_stats(X, y, miss):
    """Per-column least-squares slope of ``y`` on ``X[:, j]`` over non-missing rows.

    Returns ``(t, df)``; ``df < 1`` or a constant column gives ``t = nan``.
    A perfect fit gives ``t = inf``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = (~np.asarray(miss, dtype=bool)).astype(np.float64)
    xz = np.where(w > 0, X, 0.0)
    nj = w.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mx = xz.sum(axis=0) / nj
        my = (w * y[:, None]).sum(axis=0) / nj
        dx = (xz - mx) * w
        dy = (y[:, None] - my) * w
        sxx = (dx * dx).sum(axis=0)
        sxy = (dx * dy).sum(axis=0)
        syy = (dy * dy).sum(axis=0)
        df = nj - 2
        rss = np.maximum(syy - sxy * sxy / sxx, 0.0)
        se = np.sqrt(rss / df / sxx)
        t = (sxy / sxx) / se
    bad = (sxx <= 0) | (df < 1) | ~np.isfinite(sxx)
    t = np.where(bad, np.nan, t)
    # perfect fit: infinite statistic unless the slope itself is zero
    t = np.where(~bad & (se == 0), np.where(sxy == 0, 0.0, np.inf), t)
    return t, df
