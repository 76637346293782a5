"""VG, VT and Gi pipelines with a common result type.

* VG: counterfactual ITEs, then a GUIDE-policy tree on the ITEs.
* VT: the same ITEs, then a CART-policy tree.
* Gi: a comparator that partitions (Y, T, X) directly. At each node, for
  every covariate ``X_k`` it fits ``Y ~ T + X_k + T:X_k`` and takes the
  p-value of the interaction (an F-test over all interaction contrasts for a
  categorical ``X_k``); the smallest p-value picks the variable, and the cut
  minimises the summed child SSE of the arm-mean models ``Y ~ T``. Leaf
  values are treated-minus-control mean differences.

All three declare a subgroup when the tree makes at least one split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .counterfactual import CounterfactualConfig, IteVector, estimate_ite
from .data import Dataset, Signature
from .tree import (CutResult, NodeData, Proposal, Tree, TreeConfig, _make_rule,
                   _ordered_values, argmin_by_name, exact_sse, extract_signature,
                   grow_tree)

METHODS = ("vg", "vt", "gi")
_TAGS = {"vg": "VG", "vt": "VT", "gi": "Gi"}


@dataclass(frozen=True)
class MethodConfig:
    counterfactual: CounterfactualConfig = CounterfactualConfig()
    tree: TreeConfig = TreeConfig()

    def to_json(self) -> dict:
        return {"counterfactual": self.counterfactual.to_json(), "tree": self.tree.to_json()}


@dataclass(eq=False)
class SubgroupResult:
    method: str
    tree: Tree
    seed: int
    config: MethodConfig
    ite: np.ndarray | None = field(default=None, repr=False)

    @property
    def identified(self) -> bool:
        return self.tree.identified

    @property
    def root_pvalue(self) -> float:
        return self.tree.root_pvalue

    @property
    def root_variable(self) -> str | None:
        return self.tree.root.rule.variable if self.identified else None

    @property
    def root_cut(self):
        return self.tree.root.rule.value if self.identified else None

    @property
    def signature(self) -> Signature:
        return extract_signature(self.tree)[0]

    def subgroups(self) -> list:
        """One entry per leaf: id, signature, size and mean effect."""
        out = []
        for leaf in self.tree.leaves():
            sig, _ = extract_signature(self.tree, leaf.id) if self.identified else (Signature(), None)
            out.append({"id": leaf.id, "signature": sig, "n": leaf.n, "meanEffect": leaf.value})
        return out

    def to_json(self) -> dict:
        return {
            "method": _TAGS[self.method],
            "identified": self.identified,
            "rootPValue": None if math.isinf(self.root_pvalue) else self.root_pvalue,
            "signature": self.signature.to_json(),
            "signatureText": str(self.signature) if self.identified else None,
            "subgroups": [{"id": g["id"], "signature": g["signature"].to_json(),
                           "signatureText": str(g["signature"]), "n": g["n"],
                           "meanEffect": g["meanEffect"]} for g in self.subgroups()],
            "tree": self.tree.to_json(),
            "seed": self.seed,
            "config": self.config.to_json(),
        }

    def render(self) -> str:
        label = "effect" if self.method == "gi" else "mean ITE"
        head = f"{_TAGS[self.method]}: " + (
            f"subgroup identified ({self.signature})" if self.identified
            else "no subgroup identified")
        return head + "\n" + self.tree.render(label)


# --------------------------------------------------------------------------
# Gi policy

def _interaction_pvalue(y, t, x, categorical: bool) -> float:
    """p-value for adding treatment-by-covariate terms to ``Y ~ T + X``."""
    n = y.size
    one = np.ones(n)
    if categorical:
        codes = x.astype(np.int64)
        uniq = np.unique(codes)
        if uniq.size < 2:
            return math.nan
        dummies = (codes[:, None] == uniq[None, 1:]).astype(np.float64)
        reduced = np.column_stack([one, t, dummies])
        full = np.column_stack([reduced, dummies * t[:, None]])
    else:
        if np.ptp(x) == 0:
            return math.nan
        reduced = np.column_stack([one, t, x])
        full = np.column_stack([reduced, t * x])
    r_full = np.linalg.matrix_rank(full)
    r_red = np.linalg.matrix_rank(reduced)
    q = r_full - r_red
    dfr = n - r_full
    if q < 1 or dfr < 1:
        return math.nan

    def rss(A):
        beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ beta
        return float(r @ r)

    rss_f, rss_r = rss(full), rss(reduced)
    if rss_f <= 1e-14 * max(rss_r, 1e-300):
        return 0.0 if rss_r > 1e-14 * max(float(y @ y), 1e-300) else 1.0
    f = max(rss_r - rss_f, 0.0) / q / (rss_f / dfr)
    return float(stats.f.sf(f, q, dfr))


class GiInteraction:
    name = "gi"

    def pvalues(self, data: NodeData, rows) -> np.ndarray:
        rows = np.asarray(rows)
        t = data.treatment[rows].astype(np.float64)
        p = np.full(data.X.shape[1], np.nan)
        if np.ptp(t) == 0:
            return p
        y = data.y[rows]
        for j, kind in enumerate(data.kinds):
            ok = ~data.missing[rows, j]
            if ok.sum() < 5 or np.ptp(t[ok]) == 0:
                continue
            p[j] = _interaction_pvalue(y[ok], t[ok], data.X[rows[ok], j], kind.is_categorical)
        return p

    def _effect(self, data: NodeData, rows) -> float:
        t = data.treatment[rows] == 1
        y = data.y[rows]
        if t.all() or not t.any():
            return 0.0
        return float(y[t].mean() - y[~t].mean())

    def best_cut(self, data: NodeData, rows, j: int, min_child: int) -> CutResult | None:
        rows = np.asarray(rows)
        srt, xs, levels = _ordered_values(data, rows, j,
                                          order_by=lambda r: self._effect(data, r))
        if srt.size < 2:
            return None
        miss_rows = rows[data.missing[rows, j]]
        y = data.y[rows]
        center = math.fsum(y) / y.size
        tm = data.treatment[miss_rows] == 1
        ym = data.y[miss_rows] - center
        sse = kernels.gi_scan(
            np.ascontiguousarray(xs), np.ascontiguousarray(data.y[srt] - center),
            np.ascontiguousarray(data.treatment[srt], dtype=np.int8),
            [float(ym[~tm].sum()), float(ym[tm].sum())],
            [float((ym[~tm] ** 2).sum()), float((ym[tm] ** 2).sum())],
            [float((~tm).sum()), float(tm.sum())],
            float(min_child),
        )
        finite = np.isfinite(sse)
        if not finite.any():
            return None
        best = sse[finite].min()
        tol = 0.0 if np.ptp(y) == 0 else 1e-9 * exact_sse(y)
        k = int(np.flatnonzero(finite & (sse <= best + tol))[0])
        left = srt[: k + 1]
        right = np.concatenate([srt[k + 1:], miss_rows])
        return CutResult(_make_rule(data, j, xs, k, levels), np.sort(left), np.sort(right),
                         _arm_sse(data, left) + _arm_sse(data, right))

    def propose(self, data: NodeData, rows, min_child: int) -> Proposal | None:
        p = self.pvalues(data, rows)
        j = argmin_by_name(p, data.names)
        if j < 0:
            return None
        return Proposal(j, float(p[j]), self.best_cut(data, rows, j, min_child))

    def leaf_value(self, data: NodeData, rows) -> float:
        return self._effect(data, rows)


def _arm_sse(data: NodeData, rows) -> float:
    t = data.treatment[rows] == 1
    return exact_sse(data.y[rows][t]) + exact_sse(data.y[rows][~t])


# --------------------------------------------------------------------------
# Pipelines

def _ite_tree(d: Dataset, ite, policy: str, cfg: MethodConfig) -> Tree:
    return grow_tree(NodeData.from_dataset(d, ite), policy, cfg.tree)


def run_vg(d: Dataset, cfg: MethodConfig = MethodConfig(), seed: int = 0,
           ite: IteVector | np.ndarray | None = None) -> SubgroupResult:
    """VG pipeline. ``ite`` skips Step I (e.g. ITEs from an oracle model)."""
    if ite is None:
        ite, _ = estimate_ite(d, cfg.counterfactual, seed)
    values = ite.values if isinstance(ite, IteVector) else np.asarray(ite, dtype=np.float64)
    return SubgroupResult("vg", _ite_tree(d, values, "guide", cfg), seed, cfg, values)


def run_vt(d: Dataset, cfg: MethodConfig = MethodConfig(), seed: int = 0,
           ite: IteVector | np.ndarray | None = None) -> SubgroupResult:
    """VT pipeline: same Step I as VG, CART-policy tree on the ITEs."""
    if ite is None:
        ite, _ = estimate_ite(d, cfg.counterfactual, seed)
    values = ite.values if isinstance(ite, IteVector) else np.asarray(ite, dtype=np.float64)
    return SubgroupResult("vt", _ite_tree(d, values, "cart", cfg), seed, cfg, values)


def run_gi(d: Dataset, cfg: MethodConfig = MethodConfig(), seed: int = 0) -> SubgroupResult:
    tree = grow_tree(NodeData.from_dataset(d), GiInteraction(), cfg.tree)
    return SubgroupResult("gi", tree, seed, cfg)


def run_methods(d: Dataset, methods, cfg: MethodConfig = MethodConfig(), seed: int = 0) -> dict:
    """Run several methods on one dataset; VG and VT share one Step I fit."""
    methods = [m.lower() for m in methods]
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    out = {}
    ite = None
    if {"vg", "vt"} & set(methods):
        ite, _ = estimate_ite(d, cfg.counterfactual, seed)
    for m in methods:
        if m == "vg":
            out[m] = run_vg(d, cfg, seed, ite)
        elif m == "vt":
            out[m] = run_vt(d, cfg, seed, ite)
        else:
            out[m] = run_gi(d, cfg, seed)
    return out


def run_method(d: Dataset, method: str, cfg: MethodConfig = MethodConfig(), seed: int = 0):
    return run_methods(d, [method], cfg, seed)[method.lower()]
