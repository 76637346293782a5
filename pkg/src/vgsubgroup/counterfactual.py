"""Counterfactual response prediction and individual treatment effects.

A learner is trained on the observed block of the stacked design (weight 1)
and scored on the flipped-treatment block (weight 0). Its features are the
treatment, the covariates and the two interaction blocks ``t * x`` and
``(1 - t) * x``. ITEs are always treatment-minus-control:
``y - y'`` for treated rows and ``y' - y`` for control rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import BINARY, CONTINUOUS, Dataset, DataError, stack_counterfactual
from .rng import int_seed
from .tree import NodeData, TreeConfig, grow_tree

BACKENDS = ("forest", "single-tree")


@dataclass(frozen=True)
class CounterfactualConfig:
    backend: str = "forest"
    n_trees: int = 500
    max_features: int | None = None
    min_leaf: int = 5
    oob: bool = False
    tree_policy: str = "guide"
    tree: TreeConfig = TreeConfig(min_node=10, max_depth=4, theta=1.0)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be >= 1")

    def feature_subsample(self, p: int) -> int:
        if self.max_features is not None:
            return self.max_features
        return math.ceil(math.sqrt(3 * p + 1))

    def to_json(self) -> dict:
        return {"backend": self.backend, "nTrees": self.n_trees,
                "maxFeatures": self.max_features, "minLeaf": self.min_leaf,
                "treePolicy": self.tree_policy, "tree": self.tree.to_json()}


def design_features(t, X) -> np.ndarray:
    """``[t, x, t*x, (1-t)*x]`` for arbitrary treatment values ``t``."""
    t = np.asarray(t, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    return np.column_stack([t, X, t[:, None] * X, (1.0 - t)[:, None] * X])


def feature_names(names) -> tuple:
    names = list(names)
    return tuple(["T", *names, *(f"{n}:T" for n in names), *(f"{n}:(1-T)" for n in names)])


def _feature_kinds(kinds) -> tuple:
    inter = tuple(BINARY if k.kind == "binary" else CONTINUOUS for k in kinds)
    return (BINARY, *kinds, *inter, *inter)


@dataclass(eq=False)
class CounterfactualModel:
    backend: str
    config: CounterfactualConfig
    seed: int
    names: tuple
    kinds: tuple
    response_kind: str
    estimator: object = field(default=None, repr=False)
    constant: float | None = None
    metrics: dict = field(default_factory=dict)

    def predict_rows(self, t, X) -> np.ndarray:
        """Predicted response at treatment ``t`` with covariate rows ``X``."""
        t = np.asarray(t, dtype=np.float64)
        if self.constant is not None:
            return np.full(t.shape[0], self.constant)
        F = design_features(t, X)
        if self.backend == "forest":
            pred = self.estimator.predict(F)
        else:
            tree, values = self.estimator
            leaf = tree.route(F)
            pred = np.array([values[i] for i in leaf], dtype=np.float64)
        if self.response_kind == "binary":
            pred = np.clip(pred, 0.0, 1.0)
        return pred

    def check_schema(self, d: Dataset) -> None:
        if d.names != self.names or d.kinds != self.kinds:
            raise DataError("dataset covariate schema differs from the training schema")

    def to_json(self) -> dict:
        return {"backend": self.backend, "config": self.config.to_json(), "seed": self.seed,
                "constantResponse": self.constant is not None, "metrics": self.metrics}


@dataclass(eq=False)
class OracleModel:
    """Wraps a known mean function ``f(t, X)`` behind the model interface."""

    fn: object
    names: tuple = None
    kinds: tuple = None
    response_kind: str = "continuous"

    def predict_rows(self, t, X) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(t, dtype=np.float64), np.asarray(X)), dtype=np.float64)

    def check_schema(self, d: Dataset) -> None:
        if self.names is not None and d.names != self.names:
            raise DataError("dataset covariate schema differs from the oracle schema")

    @classmethod
    def from_scenario(cls, scn, truth, names=None) -> "OracleModel":
        """Noiseless mean of a simulated scenario (continuous response)."""
        pi, gi, x0 = truth.pred_index, truth.prog_index, truth.x0

        def fn(t, X):
            mu = scn.beta_trt * t
            if pi is not None:
                mu = mu + scn.beta_pred * (X[:, pi] > x0) * t
            if gi is not None:
                mu = mu + scn.beta_prog * X[:, gi]
            return mu

        return cls(fn, names)


def fit_counterfactual(d: Dataset, cfg: CounterfactualConfig = CounterfactualConfig(),
                       seed: int = 0) -> CounterfactualModel:
    """Train the Step I learner on the observed rows of the stacked design."""
    design = stack_counterfactual(d)
    obs = design.fit_weight == 1
    F = design.features()[obs]
    y = design.y_observed
    model = CounterfactualModel(cfg.backend, cfg, seed, d.names, d.kinds, d.response_kind)
    var = float(np.var(y))
    model.metrics["responseVariance"] = var
    if np.ptp(y) == 0:
        model.constant = float(y[0])
        model.metrics["trainMSE"] = 0.0
        return model

    if cfg.backend == "forest":
        from sklearn.ensemble import RandomForestRegressor

        rf = RandomForestRegressor(
            n_estimators=cfg.n_trees,
            max_features=min(cfg.feature_subsample(d.p), F.shape[1]),
            min_samples_leaf=cfg.min_leaf,
            bootstrap=True,
            oob_score=cfg.oob,
            random_state=int_seed(seed, "forest"),
            n_jobs=1,
        )
        rf.fit(F, y)
        model.estimator = rf
        if cfg.oob:
            model.metrics["oobMSE"] = float(np.mean((rf.oob_prediction_ - y) ** 2))
    else:
        data = NodeData(F, np.isnan(F), _feature_kinds(d.kinds), feature_names(d.names), y)
        tree = grow_tree(data, cfg.tree_policy, cfg.tree)
        model.estimator = (tree, tree.leaf_values())
    fitted = model.predict_rows(d.treatment, d.covariates)
    model.metrics["trainMSE"] = float(np.mean((fitted - y) ** 2))
    return model


def predict_flipped(m, d: Dataset) -> np.ndarray:
    """Predicted response of every row under the treatment it did not receive."""
    m.check_schema(d)
    return m.predict_rows(1 - d.treatment.astype(np.float64), d.covariates)


@dataclass(frozen=True, eq=False)
class IteVector:
    values: np.ndarray
    convention: str = "treatment-minus-control"

    def __len__(self):
        return self.values.shape[0]


def compute_ite(d: Dataset, y_flipped) -> IteVector:
    y_flipped = np.asarray(y_flipped, dtype=np.float64)
    if y_flipped.shape != (d.n,):
        raise ValueError("flipped predictions must have length n")
    treated = d.treatment == 1
    ite = np.where(treated, d.response - y_flipped, y_flipped - d.response)
    ite.setflags(write=False)
    return IteVector(ite)


def estimate_ite(d: Dataset, cfg: CounterfactualConfig = CounterfactualConfig(),
                 seed: int = 0) -> tuple[IteVector, CounterfactualModel]:
    """Fit Step I and return the ITEs together with the fitted model."""
    model = fit_counterfactual(d, cfg, seed)
    return compute_ite(d, predict_flipped(model, d)), model
