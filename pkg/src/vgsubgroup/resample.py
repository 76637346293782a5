"""Permutation calibration of the split threshold and bootstrap intervals.

Permutation: the treatment column is shuffled while every (X, Y) row stays
intact, which removes treatment-covariate and treatment-response association
but keeps the prognostic structure. The calibrated threshold is the
``target``-quantile (an order statistic) of the null root selection
p-values.

Bootstrap: each replicate resamples ``n`` rows with replacement, refits the
counterfactual model, recomputes ITEs and partitions the replicate by the
signature found on the original data (it does not re-search for a
subgroup). Intervals are percentile intervals.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .counterfactual import CounterfactualConfig, estimate_ite
from .data import Dataset, DataError, Signature, signature_mask
from .methods import MethodConfig, run_method
from .rng import int_seed, stream

BOOTSTRAP_CF = CounterfactualConfig(backend="single-tree")


def permute_treatment(d: Dataset, rng: np.random.Generator) -> Dataset:
    return d.replace(treatment=rng.permutation(d.treatment))


@dataclass(frozen=True, eq=False)
class PermutationCalibration:
    method: str
    target: float
    n_perm: int
    null_pvalues: np.ndarray = field(repr=False)
    theta: float

    @property
    def order_index(self) -> int:
        """1-based rank of the null p-value used as the threshold."""
        return max(1, int(math.floor(self.target * self.n_perm + 1e-9)))

    def to_json(self) -> dict:
        return {"method": self.method, "target": self.target, "nPerm": self.n_perm,
                "theta": self.theta, "orderIndex": self.order_index,
                "nullPValues": [None if math.isinf(p) else float(p) for p in self.null_pvalues]}


def _root_pvalue(args):
    d, method, cfg, seed, b = args
    dp = permute_treatment(d, stream(seed, "permutation", b))
    r = run_method(dp, method, cfg, int_seed(seed, "permutation-fit", b))
    return r.root_pvalue if r.tree.root.rule is not None else math.inf


def calibrate_threshold(d: Dataset, method: str = "vg", target: float = 0.05, n_perm: int = 500,
                        seed: int = 0, cfg: MethodConfig = MethodConfig(),
                        threads: int = 1) -> PermutationCalibration:
    """Threshold giving Type I error ``target`` on the permutation null of ``d``."""
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    if n_perm < 20 or n_perm * target < 1:
        raise ValueError("need n_perm >= 20 and n_perm >= 1/target")
    cfg = replace(cfg, tree=replace(cfg.tree, theta=1.0, max_depth=1))
    jobs = [(d, method, cfg, seed, b) for b in range(n_perm)]
    if threads <= 1:
        ps = [_root_pvalue(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            ps = list(ex.map(_root_pvalue, jobs))
    ps = np.array(ps, dtype=np.float64)
    cal = PermutationCalibration(method, target, n_perm, ps, 0.0)
    theta = float(np.sort(ps)[cal.order_index - 1])
    return replace(cal, theta=min(theta, 1.0))


# --------------------------------------------------------------------------
# Bootstrap

def percentile_indices(b: int, level: float) -> tuple[int, int]:
    """1-based order statistics bounding a ``level`` percentile interval."""
    a = (1.0 - level) / 2.0
    lo = max(1, math.ceil(b * a - 1e-9))
    hi = min(b, math.ceil(b * (1.0 - a) - 1e-9))
    return lo, hi


def percentile_ci(values, level: float) -> tuple[float, float]:
    v = np.sort(np.asarray(values, dtype=np.float64))
    v = v[~np.isnan(v)]
    if v.size == 0:
        return math.nan, math.nan
    lo, hi = percentile_indices(v.size, level)
    return float(v[lo - 1]), float(v[hi - 1])


@dataclass(frozen=True, eq=False)
class BootstrapSummary:
    B: int
    level: float
    signature: Signature
    estimate: dict
    distributions: dict = field(repr=False)
    ci: dict
    n_missing: int

    def rows(self) -> list:
        """Table rows: (label, point estimate, (lower, upper))."""
        inside = str(self.signature) if not self.signature.empty else "(all)"
        return [
            (inside, self.estimate["inside"], self.ci["inside"]),
            (f"not ({inside})", self.estimate["outside"], self.ci["outside"]),
            ("Difference between Above Two Subgroups", self.estimate["difference"],
             self.ci["difference"]),
        ]

    def markdown(self) -> str:
        pct = f"{100 * self.level:g}%"

        def f(v):
            return "n/a" if v is None or math.isnan(v) else f"{v:.2f}"

        lines = [f"| Subgroup | Mean Effect | {pct} CI |", "|---|---|---|"]
        for label, est, (lo, hi) in self.rows():
            lines.append(f"| {label} | {f(est)} | ({f(lo)}, {f(hi)}) |")
        if self.n_missing:
            lines.append(f"\n{self.n_missing} of {self.B} replicates had an empty subgroup "
                         "and were excluded.")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        def clean(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "B": self.B, "level": self.level, "signature": self.signature.to_json(),
            "signatureText": str(self.signature), "nMissing": self.n_missing,
            "estimate": {k: clean(v) for k, v in self.estimate.items()},
            "ci": {k: [clean(a), clean(b)] for k, (a, b) in self.ci.items()},
            "distributions": {k: [clean(float(x)) for x in v] for k, v in self.distributions.items()},
        }


def _group_means(d: Dataset, ite: np.ndarray, s: Signature):
    inside = signature_mask(d, s)
    if inside.all() or not inside.any():
        return math.nan, math.nan, math.nan
    a = float(ite[inside].mean())
    b = float(ite[~inside].mean())
    return a, b, a - b


def _replicate(args):
    d, s, cfg, seed, b = args
    rows = stream(seed, "bootstrap", b).integers(0, d.n, d.n)
    try:
        db = d.take(rows)
    except DataError:
        return math.nan, math.nan, math.nan
    ite, _ = estimate_ite(db, cfg, int_seed(seed, "bootstrap-fit", b))
    return _group_means(db, ite.values, s)


def bootstrap_ci(d: Dataset, s: Signature, B: int = 500, level: float = 0.95,
                 cfg: CounterfactualConfig = BOOTSTRAP_CF, seed: int = 0,
                 threads: int = 1) -> BootstrapSummary:
    """Signature-conditioned percentile bootstrap of subgroup mean ITEs.

    Replicates where the signature leaves either side empty are recorded as
    NaN and excluded from the intervals.
    """
    if B < 100:
        raise ValueError("B must be >= 100")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    for v in s.variables():
        d.column(v)
    ite, _ = estimate_ite(d, cfg, int_seed(seed, "point"))
    ins, outs, diff = _group_means(d, ite.values, s)
    jobs = [(d, s, cfg, seed, b) for b in range(B)]
    if threads <= 1:
        reps = [_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(_replicate, jobs))
    reps = np.array(reps, dtype=np.float64).reshape(B, 3)
    dist = {"inside": reps[:, 0], "outside": reps[:, 1], "difference": reps[:, 2]}
    return BootstrapSummary(
        B=B, level=level, signature=s,
        estimate={"overall": float(ite.values.mean()), "inside": ins, "outside": outs,
                  "difference": diff},
        distributions=dist,
        ci={k: percentile_ci(v, level) for k, v in dist.items()},
        n_missing=int(np.isnan(reps[:, 2]).sum()),
    )
