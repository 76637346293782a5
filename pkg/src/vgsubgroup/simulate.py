"""Seeded generators for the simulation scenarios.

Continuous covariates are exchangeable standard normals with pairwise
correlation 0.5, built as ``sqrt(.5) * F + sqrt(.5) * E_j`` from a shared
factor ``F`` and a per-column stream ``E_j``; this has the same law as the
MVN(0, Sigma) recipe but lets each column own its random stream. Binary
covariates draw ``p_x ~ Beta(2, 3)`` once per column and are independent of
the Gaussian block.

Outcomes follow::

    mu = b_pred * I(x_pred > x0) * T + b_prog * x_prog + b_trt * T
    Y  = mu + e,  e ~ N(0, 0.25)          (continuous)
    Y  ~ Bernoulli(exp(mu) / (1 + exp(mu)))  (binary)

with ``x0`` the realised sample mean of the predictive column. For a binary
predictive column this makes level 1 the true subgroup.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import BINARY, CONTINUOUS, CovariateKind, Dataset
from .rng import stream

NOISE_SD = 0.5
_RHO = 0.5


@dataclass(frozen=True)
class Scenario:
    name: str
    beta_pred: float
    beta_prog: float
    beta_trt: float
    pred_kind: str | None = "continuous"
    prog_kind: str | None = None
    noise_continuous: int = 13
    noise_binary: int = 0
    n: int = 400
    response_kind: str = "continuous"
    stream_key: str = ""

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("scenario n must be >= 2")
        if self.noise_continuous < 0 or self.noise_binary < 0:
            raise ValueError("noise counts must be >= 0")
        for k in (self.pred_kind, self.prog_kind):
            if k not in (None, "continuous", "binary"):
                raise ValueError(f"unsupported covariate kind {k!r}")
        if self.prog_kind is None and self.beta_prog != 0:
            raise ValueError("beta_prog must be 0 when there is no prognostic variable")
        if self.pred_kind is None and self.beta_pred != 0:
            raise ValueError("beta_pred must be 0 when there is no predictive variable")
        if self.response_kind not in ("continuous", "binary"):
            raise ValueError(f"unknown response kind {self.response_kind!r}")
        if not self.stream_key:
            object.__setattr__(self, "stream_key", self.name)

    @property
    def p(self) -> int:
        return (self.noise_continuous + self.noise_binary
                + (self.pred_kind is not None) + (self.prog_kind is not None))

    def null_twin(self) -> "Scenario":
        """Same scenario with the predictive effect removed.

        Shares the random streams of ``self``, so for a given seed the null
        twin has identical covariates, treatment and noise.
        """
        return replace(self, name=f"{self.name}/null", beta_pred=0.0)

    def to_json(self) -> dict:
        d = asdict(self)
        return {_CAMEL[k]: v for k, v in d.items()}

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        """Build from a JSON mapping; ``preset`` names a base scenario to override."""
        obj = dict(obj)
        base = {}
        if "preset" in obj:
            base = asdict(preset(obj.pop("preset")))
        unknown = set(obj) - set(_SNAKE)
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        base.update({_SNAKE[k]: v for k, v in obj.items()})
        if "name" not in base:
            raise ValueError("scenario needs a name")
        if "stream_key" not in obj and "name" in obj:
            base["stream_key"] = ""
        return cls(**base)


_CAMEL = {
    "name": "name", "beta_pred": "betaPred", "beta_prog": "betaProg",
    "beta_trt": "betaTrt", "pred_kind": "predKind", "prog_kind": "progKind",
    "noise_continuous": "noiseContinuous", "noise_binary": "noiseBinary",
    "n": "n", "response_kind": "responseKind", "stream_key": "streamKey",
}
_SNAKE = {v: k for k, v in _CAMEL.items()}

PRESETS = {
    "no-prognostic": Scenario("no-prognostic", 0.5, 0.0, 0.2, "continuous", None, 13, 0),
    "no-prognostic-mix": Scenario("no-prognostic-mix", 0.2, 0.0, 0.2, "binary", None, 12, 1),
    "mix-prognostic": Scenario("mix-prognostic", 0.5, 0.5, 0.2, "continuous", "continuous", 13, 0),
}


def preset(name: str, **overrides) -> Scenario:
    try:
        scn = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(scn, **overrides) if overrides else scn


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_json(json.load(fh))


@dataclass(frozen=True, eq=False)
class TruthLabels:
    pred_index: int | None
    pred_name: str | None
    prog_index: int | None
    prog_name: str | None
    x0: float | None
    membership: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "predIndex": self.pred_index, "predName": self.pred_name,
            "progIndex": self.prog_index, "progName": self.prog_name,
            "x0": self.x0, "membership": [int(v) for v in self.membership],
        }


def gen_treatment(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return (rng.random(n) < 0.5).astype(np.int8)


def gen_covariates(n: int, kinds, seed: int, keys=None, prefix=()) -> np.ndarray:
    """Draw an ``n x len(kinds)`` covariate matrix.

    ``keys`` label the columns' random streams (default: position); a column
    keeps its values when other columns are added or removed.
    """
    kinds = [CovariateKind.parse(k) for k in kinds]
    if not kinds:
        raise ValueError("need at least one covariate")
    keys = list(range(len(kinds))) if keys is None else list(keys)
    x = np.empty((n, len(kinds)))
    factor = None
    for j, (kind, key) in enumerate(zip(kinds, keys)):
        rng = stream(seed, *prefix, "col", key)
        if kind.kind == "continuous":
            if factor is None:
                factor = stream(seed, *prefix, "factor").standard_normal(n)
            x[:, j] = np.sqrt(_RHO) * factor + np.sqrt(1 - _RHO) * rng.standard_normal(n)
        elif kind.kind == "binary":
            px = rng.beta(2.0, 3.0)
            x[:, j] = (rng.random(n) < px).astype(np.float64)
        else:
            raise ValueError("categorical covariates are not simulated")
    return x


def gen_outcome(scn: Scenario, x_pred, x_prog, t, rng: np.random.Generator, noise=None):
    """Response for one dataset; returns ``(y, x0, membership)``.

    ``noise`` overrides the Gaussian error draw (continuous response only).
    """
    t = np.asarray(t, dtype=np.float64)
    n = t.shape[0]
    if x_pred is not None:
        x_pred = np.asarray(x_pred, dtype=np.float64)
        x0 = float(np.mean(x_pred))
        member = x_pred > x0
    else:
        x0 = None
        member = np.zeros(n, dtype=bool)
    mu = scn.beta_pred * member * t + scn.beta_trt * t
    if x_prog is not None:
        mu = mu + scn.beta_prog * np.asarray(x_prog, dtype=np.float64)
    if scn.response_kind == "continuous":
        e = rng.normal(0.0, NOISE_SD, n) if noise is None else np.asarray(noise, dtype=np.float64)
        y = mu + e
    else:
        # draw uniforms first so the stream is consumed identically for any mu
        u = rng.random(n)
        y = (u < 1.0 / (1.0 + np.exp(-mu))).astype(np.float64)
    return y, x0, member


def gen_scenario_dataset(scn: Scenario, seed: int) -> tuple[Dataset, TruthLabels]:
    """Simulate one dataset; column order is shuffled per seed and names are ``X1..Xp``."""
    roles, kinds = [], []
    if scn.pred_kind is not None:
        roles.append("pred")
        kinds.append(scn.pred_kind)
    if scn.prog_kind is not None:
        roles.append("prog")
        kinds.append(scn.prog_kind)
    for i in range(scn.noise_binary):
        roles.append(f"noise-bin{i}")
        kinds.append("binary")
    for i in range(scn.noise_continuous):
        roles.append(f"noise{i}")
        kinds.append("continuous")
    if not roles:
        raise ValueError("scenario has no covariates")

    key = scn.stream_key
    x = gen_covariates(scn.n, kinds, seed, keys=roles, prefix=(key,))
    for attempt in range(1000):
        t = gen_treatment(scn.n, stream(seed, key, "treatment", attempt))
        if 0 < t.sum() < scn.n:
            break
    else:  # pragma: no cover - probability 2**-999 for n >= 2
        raise RuntimeError("could not draw both treatment arms")

    pred = x[:, roles.index("pred")] if "pred" in roles else None
    prog = x[:, roles.index("prog")] if "prog" in roles else None
    y, x0, member = gen_outcome(scn, pred, prog, t, stream(seed, key, "outcome"))

    order = stream(seed, key, "order").permutation(len(roles))
    x = x[:, order]
    kinds = [BINARY if kinds[j] == "binary" else CONTINUOUS for j in order]
    names = [f"X{j + 1}" for j in range(len(order))]
    where = {roles[j]: pos for pos, j in enumerate(order)}
    d = Dataset(y, t, x, tuple(kinds), tuple(names), scn.response_kind)
    pi, gi = where.get("pred"), where.get("prog")
    truth = TruthLabels(
        pred_index=pi, pred_name=None if pi is None else names[pi],
        prog_index=gi, prog_name=None if gi is None else names[gi],
        x0=x0, membership=np.asarray(member, dtype=bool),
    )
    return d, truth
