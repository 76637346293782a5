"""Regression trees on a per-row target (usually the estimated ITE).

Two split policies share one grower:

* ``GuideUnbiased`` first picks the variable with the smallest p-value from
  univariate fits ``target ~ X_k`` (slope t-test; one-way F-test for
  categorical columns) and only then searches that variable for the cut with
  the smallest total child SSE. Variable choice does not depend on how many
  cut points a variable offers.
* ``CartExhaustive`` minimises child SSE jointly over every (variable, cut)
  pair. Its node p-value is a Welch two-sample t-test between the children.

A node splits when depth < ``max_depth``, it has at least ``2 * min_node``
rows, both children keep ``min_node`` rows and the node's selection p-value
is ``<= theta`` (``theta = 0`` never splits). Rows missing the split
variable go to the right child. Threshold rules send ``x <= cut`` left; categorical rules send a level set
(levels ordered by node mean of the target) left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .data import Dataset, Signature, SplitRule

_REL_TIE = 1e-9


@dataclass(frozen=True)
class TreeConfig:
    min_node: int = 20
    max_depth: int = 3
    theta: float = 0.05

    def __post_init__(self):
        if self.min_node < 2:
            raise ValueError("min_node must be >= 2")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    def to_json(self) -> dict:
        return {"minNode": self.min_node, "maxDepth": self.max_depth, "theta": self.theta}


@dataclass(frozen=True, eq=False)
class NodeData:
    """Columns a policy needs: covariates, their kinds/names, the target and
    (for interaction policies) the treatment."""

    X: np.ndarray
    missing: np.ndarray
    kinds: tuple
    names: tuple
    y: np.ndarray
    treatment: np.ndarray | None = None

    @classmethod
    def from_dataset(cls, d: Dataset, y=None) -> "NodeData":
        y = d.response if y is None else np.asarray(y, dtype=np.float64)
        if y.shape != (d.n,):
            raise ValueError("target length must equal n")
        return cls(d.covariates, d.missing, d.kinds, d.names, y, d.treatment)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def exact_sse(y) -> float:
    """Sum of squared deviations from the mean, independent of summation order."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return 0.0
    m = math.fsum(y) / y.size
    return math.fsum((y - m) ** 2)


def _pick_min(sse: np.ndarray, y: np.ndarray) -> int:
    """Index of the smallest finite SSE, earliest among near-ties; -1 if none."""
    finite = np.isfinite(sse)
    if not finite.any():
        return -1
    if np.ptp(y) == 0:
        return int(np.flatnonzero(finite)[0])
    best = sse[finite].min()
    tol = _REL_TIE * exact_sse(y)
    return int(np.flatnonzero(finite & (sse <= best + tol))[0])


@dataclass(frozen=True, eq=False)
class CutResult:
    rule: SplitRule
    left: np.ndarray
    right: np.ndarray
    sse: float


def _ordered_values(data: NodeData, rows: np.ndarray, j: int, order_by=None):
    """Sort key per row for variable ``j``: the raw value, or for categorical
    columns the rank of the row's level by mean of ``order_by`` (default: the
    target). Returns (present rows sorted, their keys, rank -> level map)."""
    x = data.X[rows, j]
    present = ~data.missing[rows, j]
    prow = rows[present]
    xv = x[present]
    levels = None
    if data.kinds[j].is_categorical and prow.size:
        codes = xv.astype(np.int64)
        uniq = np.unique(codes)
        stat = order_by or (lambda r: data.y[r].mean())
        means = np.array([stat(prow[codes == c]) for c in uniq])
        levels = uniq[np.lexsort((uniq, means))]
        rank = np.empty(int(uniq.max()) + 1, dtype=np.float64)
        rank[levels] = np.arange(levels.size, dtype=np.float64)
        xv = rank[codes]
    order = np.argsort(xv, kind="stable")
    return prow[order], xv[order], levels


def _make_rule(data: NodeData, j: int, xs: np.ndarray, k: int, levels) -> SplitRule:
    name = data.names[j]
    if levels is not None:
        return SplitRule(name, "in", levels[: int(xs[k]) + 1].tolist())
    a, b = xs[k], xs[k + 1]
    cut = 0.5 * (a + b)
    if not a <= cut < b:
        cut = a
    return SplitRule(name, "<=", cut)


def find_split_value(data: NodeData, rows, j: int, min_child: int = 1) -> CutResult | None:
    """Best SSE cut of variable ``j`` over all midpoints of consecutive distinct
    values, each child keeping ``min_child`` rows. Ties go to the smallest cut."""
    rows = np.asarray(rows)
    srt, xs, levels = _ordered_values(data, rows, j)
    if srt.size < 2:
        return None
    miss_rows = rows[data.missing[rows, j]]
    y = data.y[rows]
    center = math.fsum(y) / y.size
    ys = data.y[srt] - center
    ym = data.y[miss_rows] - center
    sse = kernels.sse_scan(
        np.ascontiguousarray(xs), np.ascontiguousarray(ys),
        float(ym.sum()), float((ym * ym).sum()), float(ym.size), float(min_child),
    )
    k = _pick_min(sse, y)
    if k < 0:
        return None
    rule = _make_rule(data, j, xs, k, levels)
    left = srt[: k + 1]
    right = np.concatenate([srt[k + 1:], miss_rows])
    return CutResult(rule, np.sort(left), np.sort(right),
                     exact_sse(data.y[left]) + exact_sse(data.y[right]))


def _anova_p(y: np.ndarray, codes: np.ndarray) -> float:
    uniq = np.unique(codes)
    k, n = uniq.size, y.size
    if k < 2 or n <= k:
        return math.nan
    grand = y.mean()
    ssb = sum(((y[codes == c].mean() - grand) ** 2) * np.count_nonzero(codes == c) for c in uniq)
    ssw = sum(((y[codes == c] - y[codes == c].mean()) ** 2).sum() for c in uniq)
    if ssw <= 0:
        return 0.0 if ssb > 0 else 1.0
    f = (ssb / (k - 1)) / (ssw / (n - k))
    return float(stats.f.sf(f, k - 1, n - k))


def univariate_pvalues(data: NodeData, rows) -> np.ndarray:
    """Two-sided p-value of the association of the target with each covariate
    (NaN where the covariate is constant or too sparse on ``rows``)."""
    rows = np.asarray(rows)
    X = np.ascontiguousarray(data.X[rows])
    miss = np.ascontiguousarray(data.missing[rows])
    y = np.ascontiguousarray(data.y[rows])
    t, df = kernels.slope_stats(X, y, miss)
    with np.errstate(invalid="ignore"):
        p = np.where(np.isnan(t), np.nan, 2.0 * stats.t.sf(np.abs(t), np.maximum(df, 1)))
    for j, kind in enumerate(data.kinds):
        if kind.is_categorical:
            ok = ~miss[:, j]
            p[j] = _anova_p(y[ok], X[ok, j].astype(np.int64))
    return p


def argmin_by_name(values: np.ndarray, names) -> int:
    """Index of the smallest non-NaN value; exact ties go to the first name in
    sort order. -1 when all values are NaN."""
    ok = ~np.isnan(values)
    if not ok.any():
        return -1
    best = values[ok].min()
    cand = np.flatnonzero(ok & (values == best))
    return int(min(cand, key=lambda j: names[j]))


def select_variable_guide(data: NodeData, rows) -> tuple[int, float]:
    """Variable with the smallest univariate p-value and that p-value."""
    p = univariate_pvalues(data, rows)
    j = argmin_by_name(p, data.names)
    if j < 0:
        raise ValueError("no admissible variable: every covariate is constant on this node")
    return j, float(p[j])


def welch_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or b.size < 2:
        return math.nan
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        return 0.0 if a.mean() != b.mean() else 1.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


def select_split_cart(data: NodeData, rows, min_child: int = 1):
    """Jointly best (variable, cut) by child SSE; ties go to the first name.

    Returns ``(j, CutResult)`` or ``None`` when no variable has an
    admissible cut.
    """
    rows = np.asarray(rows)
    results = {}
    for j in range(data.X.shape[1]):
        r = find_split_value(data, rows, j, min_child)
        if r is not None:
            results[j] = r
    if not results:
        return None
    y = data.y[rows]
    best = min(r.sse for r in results.values())
    tol = 0.0 if np.ptp(y) == 0 else _REL_TIE * exact_sse(y)
    cand = [j for j, r in results.items() if r.sse <= best + tol]
    j = min(cand, key=lambda c: data.names[c])
    return j, results[j]


# --------------------------------------------------------------------------
# Policies

@dataclass(frozen=True, eq=False)
class Proposal:
    variable: int
    pvalue: float
    cut: CutResult | None


class GuideUnbiased:
    name = "guide"

    def propose(self, data: NodeData, rows, min_child: int) -> Proposal | None:
        p = univariate_pvalues(data, rows)
        j = argmin_by_name(p, data.names)
        if j < 0:
            return None
        return Proposal(j, float(p[j]), find_split_value(data, rows, j, min_child))

    def leaf_value(self, data: NodeData, rows) -> float:
        return float(np.mean(data.y[rows]))


class CartExhaustive:
    name = "cart"

    def propose(self, data: NodeData, rows, min_child: int) -> Proposal | None:
        found = select_split_cart(data, rows, min_child)
        if found is None:
            return None
        j, cut = found
        p = welch_pvalue(data.y[cut.left], data.y[cut.right])
        return Proposal(j, 1.0 if math.isnan(p) else p, cut)

    def leaf_value(self, data: NodeData, rows) -> float:
        return float(np.mean(data.y[rows]))


POLICIES = {"guide": GuideUnbiased, "cart": CartExhaustive}


# --------------------------------------------------------------------------
# Tree

@dataclass(eq=False)
class Node:
    id: int
    depth: int
    rows: np.ndarray = field(repr=False)
    value: float
    pvalue: float | None = None
    selected: str | None = None
    rule: SplitRule | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def n(self) -> int:
        return int(self.rows.size)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_json(self) -> dict:
        out = {"id": self.id, "n": self.n, "value": self.value,
               "pvalue": self.pvalue, "selected": self.selected}
        if not self.is_leaf:
            out["rule"] = self.rule.to_json()
            out["left"] = self.left.to_json()
            out["right"] = self.right.to_json()
        return out


@dataclass(eq=False)
class Tree:
    root: Node
    policy: str
    config: TreeConfig
    names: tuple

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    def leaves(self) -> list:
        return sorted((nd for nd in self.nodes() if nd.is_leaf), key=lambda nd: nd.id)

    @property
    def n_splits(self) -> int:
        return sum(1 for nd in self.nodes() if not nd.is_leaf)

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes() if nd.is_leaf)

    @property
    def identified(self) -> bool:
        return not self.root.is_leaf

    @property
    def root_pvalue(self) -> float:
        """Selection p-value at the root; ``inf`` when no split was admissible."""
        p = self.root.pvalue
        return math.inf if p is None else p

    def splits(self) -> set:
        """(node id, rule) pairs of every internal node."""
        return {(nd.id, nd.rule) for nd in self.nodes() if not nd.is_leaf}

    def route(self, X: np.ndarray, missing: np.ndarray | None = None) -> np.ndarray:
        """Leaf id for each row of ``X`` (columns in ``self.names`` order)."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.int64)
        idx = {nm: j for j, nm in enumerate(self.names)}

        def walk(node, rows):
            if node.is_leaf:
                out[rows] = node.id
                return
            go_left = node.rule.holds(X[rows, idx[node.rule.variable]])
            walk(node.left, rows[go_left])
            walk(node.right, rows[~go_left])

        walk(self.root, np.arange(X.shape[0]))
        return out

    def leaf_values(self) -> dict:
        return {nd.id: nd.value for nd in self.leaves()}

    def to_json(self) -> dict:
        return {"policy": self.policy, "config": self.config.to_json(),
                "names": list(self.names), "root": self.root.to_json()}

    def render(self, value_label: str = "mean ITE") -> str:
        """Indented node diagram: node number, condition, n and value per node."""
        lines = []

        def fmt_p(p):
            return "" if p is None else f"  p={p:.3g}"

        def walk(node, cond, indent):
            head = f"{'    ' * indent}Node {node.id}"
            if cond is not None:
                head += f": {cond}"
            tail = "  (leaf)" if node.is_leaf else fmt_p(node.pvalue)
            lines.append(f"{head}  n={node.n}  {value_label}={node.value:.4g}{tail}")
            if not node.is_leaf:
                walk(node.left, node.rule, indent + 1)
                walk(node.right, node.rule.negate(), indent + 1)

        walk(self.root, None, 0)
        return "\n".join(lines)


def grow_tree(data: NodeData, policy, config: TreeConfig = TreeConfig(), rows=None) -> Tree:
    """Grow a tree on ``data.y`` by recursive binary splitting.

    ``policy`` is a policy object or one of ``"guide"`` / ``"cart"``.
    """
    if isinstance(policy, str):
        policy = POLICIES[policy]()
    rows = np.arange(data.n) if rows is None else np.asarray(rows)

    def build(rows, node_id, depth):
        node = Node(node_id, depth, rows, policy.leaf_value(data, rows))
        if depth >= config.max_depth or rows.size < 2 * config.min_node:
            return node
        prop = policy.propose(data, rows, config.min_node)
        if prop is None:
            return node
        node.pvalue = prop.pvalue
        node.selected = data.names[prop.variable]
        if prop.cut is None or not (config.theta > 0 and prop.pvalue <= config.theta):
            return node
        node.rule = prop.cut.rule
        node.left = build(prop.cut.left, 2 * node_id, depth + 1)
        node.right = build(prop.cut.right, 2 * node_id + 1, depth + 1)
        return node

    return Tree(build(rows, 1, 0), policy.name, config, tuple(data.names))


def extract_signature(tree: Tree, leaf_id: int | None = None) -> tuple[Signature, Node | None]:
    """Path conditions from the root to a leaf.

    The default leaf is the one with the largest value (smallest id on ties).
    A single-leaf tree yields an empty signature and ``None`` (no subgroup).
    """
    if tree.root.is_leaf:
        return Signature(), None
    leaves = tree.leaves()
    if leaf_id is None:
        target = max(leaves, key=lambda nd: (nd.value, -nd.id))
    else:
        target = next((nd for nd in leaves if nd.id == leaf_id), None)
        if target is None:
            raise KeyError(f"no leaf with id {leaf_id}")
    path = []
    node = tree.root
    while not node.is_leaf:
        if _contains(node.left, target):
            path.append(node.rule)
            node = node.left
        else:
            path.append(node.rule.negate())
            node = node.right
    return Signature(tuple(path)), target


def _contains(node: Node, target: Node) -> bool:
    # heap numbering: target is under node iff shifting its id lands on node.id
    tid = target.id
    while tid > node.id:
        tid //= 2
    return tid == node.id
