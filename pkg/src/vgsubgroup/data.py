"""Dataset container, CSV ingestion and the stacked counterfactual design.

Missing covariate values are stored as NaN in ``covariates`` and flagged in
``missing``. Whenever a split or signature condition cannot be evaluated
because its variable is missing, the row goes to the non-member (right) side.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class DataError(ValueError):
    """Raised when input data violates the dataset contract."""


@dataclass(frozen=True)
class CovariateKind:
    kind: str
    levels: int | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "binary", "categorical"):
            raise ValueError(f"unknown covariate kind {self.kind!r}")
        if self.kind == "categorical":
            if self.levels is None or self.levels < 2:
                raise ValueError("categorical kind needs a level count >= 2")
        elif self.levels is not None:
            raise ValueError(f"{self.kind} kind takes no level count")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.levels is not None:
            out["levels"] = self.levels
        return out

    @classmethod
    def parse(cls, spec) -> "CovariateKind":
        """Build a kind from ``"continuous"``, ``"binary"``, ``"categorical:L"``
        or a ``{"kind": ..., "levels": ...}`` mapping."""
        if isinstance(spec, CovariateKind):
            return spec
        if isinstance(spec, dict):
            return cls(spec["kind"], spec.get("levels"))
        if spec.startswith("categorical:"):
            return cls("categorical", int(spec.split(":", 1)[1]))
        return cls(spec)

    def __str__(self):
        return f"categorical({self.levels})" if self.is_categorical else self.kind


CONTINUOUS = CovariateKind("continuous")
BINARY = CovariateKind("binary")


def categorical(levels: int) -> CovariateKind:
    return CovariateKind("categorical", levels)


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response, 0/1 treatment and typed covariates for ``n`` subjects.

    Instances are validated on construction and their arrays are read-only.
    """

    response: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    kinds: tuple
    names: tuple
    response_kind: str = "continuous"
    missing: np.ndarray = field(default=None)

    def __post_init__(self):
        y = _frozen(self.response, np.float64)
        t = np.asarray(self.treatment)
        x = np.array(self.covariates, dtype=np.float64, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError("covariates must be a 2-d matrix")
        n, p = x.shape
        if n < 2:
            raise DataError("dataset needs at least 2 rows")
        if p < 1:
            raise DataError("dataset needs at least 1 covariate")
        if y.shape != (n,) or t.shape != (n,):
            raise DataError("response, treatment and covariates disagree on n")
        if not np.all(np.isfinite(y)):
            raise DataError("response has missing or non-finite entries")
        if self.response_kind not in ("continuous", "binary"):
            raise DataError(f"unknown response kind {self.response_kind!r}")
        if self.response_kind == "binary" and not np.all((y == 0) | (y == 1)):
            raise DataError("binary response must be 0/1")
        tf = np.asarray(t, dtype=np.float64)
        if not np.all((tf == 0) | (tf == 1)):
            raise DataError("treatment not in {0,1}")
        if tf.min() == tf.max():
            raise DataError("treatment has a single arm; both 0 and 1 are required")

        kinds = tuple(CovariateKind.parse(k) for k in self.kinds)
        names = tuple(str(s) for s in self.names)
        if len(kinds) != p or len(names) != p:
            raise DataError("kinds/names length must equal the covariate count")
        if len(set(names)) != p:
            raise DataError("covariate names must be unique")

        miss = np.isnan(x)
        if self.missing is not None:
            given = np.asarray(self.missing, dtype=bool)
            if given.shape != x.shape:
                raise DataError("missing mask shape mismatch")
            miss |= given
            x[miss] = np.nan
        for j, kind in enumerate(kinds):
            col = x[~miss[:, j], j]
            if not np.all(np.isfinite(col)):
                raise DataError(f"covariate {names[j]!r} has non-finite values")
            if kind.kind == "binary" and not np.all((col == 0) | (col == 1)):
                raise DataError(f"covariate {names[j]!r} declared binary but not 0/1")
            if kind.is_categorical:
                ok = (col == np.round(col)) & (col >= 0) & (col < kind.levels)
                if not np.all(ok):
                    raise DataError(
                        f"covariate {names[j]!r} levels must be integers 0..{kind.levels - 1}"
                    )

        object.__setattr__(self, "response", y)
        object.__setattr__(self, "treatment", _frozen(tf, np.int8))
        object.__setattr__(self, "covariates", _frozen(x, np.float64))
        object.__setattr__(self, "missing", _frozen(miss, bool))
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def column(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def take(self, rows) -> "Dataset":
        """Row subset (or resample, when ``rows`` repeats indices)."""
        rows = np.asarray(rows)
        return Dataset(
            self.response[rows], self.treatment[rows], self.covariates[rows],
            self.kinds, self.names, self.response_kind, self.missing[rows],
        )

    def replace(self, **changes) -> "Dataset":
        fields = dict(
            response=self.response, treatment=self.treatment,
            covariates=self.covariates, kinds=self.kinds, names=self.names,
            response_kind=self.response_kind, missing=self.missing,
        )
        fields.update(changes)
        return Dataset(**fields)

    def equals(self, other: "Dataset") -> bool:
        """Bitwise equality of every field (NaN positions compared via the mask)."""
        return (
            self.names == other.names
            and self.kinds == other.kinds
            and self.response_kind == other.response_kind
            and np.array_equal(self.response, other.response)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.missing, other.missing)
            and np.array_equal(self.covariates, other.covariates, equal_nan=True)
        )

    def schema(self, response="y", treatment="trt") -> dict:
        return {
            "response": response,
            "responseKind": self.response_kind,
            "treatment": treatment,
            "covariates": [dict(name=nm, **k.to_json()) for nm, k in zip(self.names, self.kinds)],
        }


# --------------------------------------------------------------------------
# CSV I/O

def _read_schema(schema) -> dict:
    if isinstance(schema, (str, os.PathLike)):
        with open(schema, encoding="utf-8") as fh:
            schema = json.load(fh)
    if not isinstance(schema, dict):
        raise DataError("schema must be a JSON object")
    unknown = set(schema) - {"response", "responseKind", "treatment", "covariates"}
    if unknown:
        raise DataError(f"unknown schema keys: {sorted(unknown)}")
    for key in ("response", "treatment", "covariates"):
        if key not in schema:
            raise DataError(f"schema is missing {key!r}")
    if not schema["covariates"]:
        raise DataError("schema needs at least one covariate")
    return schema


def _parse_cell(text: str, where: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at {where}") from None


def _infer_kind(col: np.ndarray) -> CovariateKind:
    vals = np.unique(col[~np.isnan(col)])
    if vals.size == 2 and vals[0] == 0 and vals[1] == 1:
        return BINARY
    return CONTINUOUS


def load_csv(path, schema) -> Dataset:
    """Read a headered, comma-separated UTF-8 file into a :class:`Dataset`.

    ``schema`` is a mapping (or path to a JSON sidecar) of the form
    ``{"response": name, "responseKind": ..., "treatment": name,
    "covariates": [{"name": ..., "kind": ...}, ...]}``. A covariate kind of
    ``"infer"`` becomes binary when the column holds exactly {0, 1} and
    continuous otherwise. Empty covariate cells are treated as missing.
    """
    schema = _read_schema(schema)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 ({exc})") from None
    except csv.Error as exc:
        raise DataError(f"{path}: malformed CSV ({exc})") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: line {i} has {len(r)} fields, expected {len(header)}")

    def col(name):
        if name not in header:
            raise DataError(f"{path}: column {name!r} not found")
        j = header.index(name)
        return np.array([_parse_cell(r[j], f"line {i + 2}, column {name!r}")
                         for i, r in enumerate(body)], dtype=np.float64)

    y = col(schema["response"])
    t = col(schema["treatment"])
    if np.isnan(y).any():
        raise DataError("response has missing entries")
    if np.isnan(t).any():
        raise DataError("treatment has missing entries")
    if not np.all((t == 0) | (t == 1)):
        raise DataError("treatment not in {0,1}")

    names, kinds, cols = [], [], []
    for cov in schema["covariates"]:
        if isinstance(cov, str):
            cov = {"name": cov, "kind": "infer"}
        c = col(cov["name"])
        kind = cov.get("kind", "infer")
        if kind == "infer":
            k = _infer_kind(c)
        else:
            k = CovariateKind.parse({"kind": kind, "levels": cov.get("levels")}
                                    if kind == "categorical" else kind)
        names.append(cov["name"])
        kinds.append(k)
        cols.append(c)
    x = np.column_stack(cols) if cols else np.empty((len(body), 0))
    return Dataset(y, t, x, tuple(kinds), tuple(names),
                   schema.get("responseKind", "continuous"))


def _fmt(v: float) -> str:
    if math.isnan(v):
        return ""
    if v == int(v) and abs(v) < 2**53 and math.copysign(1.0, v) > 0:
        return str(int(v))
    return repr(float(v))


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_csv_text(d: Dataset, response="y", treatment="trt") -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([response, treatment, *d.names])
    for i in range(d.n):
        w.writerow([_fmt(d.response[i]), int(d.treatment[i]),
                    *(_fmt(v) for v in d.covariates[i])])
    return buf.getvalue()


def write_csv(d: Dataset, path, response="y", treatment="trt", schema_path=None) -> dict:
    """Write ``d`` as CSV (shortest round-trip float repr) and return its schema.

    When ``schema_path`` is given the schema is also written there as JSON.
    """
    atomic_write_text(path, dataset_csv_text(d, response, treatment))
    schema = d.schema(response, treatment)
    if schema_path is not None:
        atomic_write_text(schema_path, json.dumps(schema, indent=2) + "\n")
    return schema


# --------------------------------------------------------------------------
# Stacked counterfactual design

@dataclass(frozen=True, eq=False)
class StackedDesign:
    """Observed rows stacked on their flipped-treatment twins (2n rows)."""

    y_observed: np.ndarray
    t_star: np.ndarray
    x_star: np.ndarray
    xt: np.ndarray
    x_one_minus_t: np.ndarray
    fit_weight: np.ndarray

    @property
    def rows(self) -> int:
        return self.t_star.shape[0]

    @property
    def n(self) -> int:
        return self.rows // 2

    def features(self) -> np.ndarray:
        """Learner feature matrix ``[t*, x*, x*t*, x*(1-t*)]``, shape (2n, 3p+1)."""
        return np.column_stack([self.t_star, self.x_star, self.xt, self.x_one_minus_t])


def stack_counterfactual(d: Dataset) -> StackedDesign:
    t = d.treatment.astype(np.float64)
    t_star = np.concatenate([t, 1.0 - t])
    x_star = np.vstack([d.covariates, d.covariates])
    design = StackedDesign(
        y_observed=d.response,
        t_star=_frozen(t_star, np.float64),
        x_star=_frozen(x_star, np.float64),
        xt=_frozen(t_star[:, None] * x_star, np.float64),
        x_one_minus_t=_frozen((1.0 - t_star)[:, None] * x_star, np.float64),
        fit_weight=_frozen(np.r_[np.ones(d.n), np.zeros(d.n)], np.float64),
    )
    return design


# --------------------------------------------------------------------------
# Split rules and signatures

@dataclass(frozen=True)
class SplitRule:
    """One condition ``variable op value``.

    ``op`` is ``"<="`` / ``">"`` with a float threshold, or ``"in"`` /
    ``"not in"`` with a tuple of categorical levels.
    """

    variable: str
    op: str
    value: float | tuple

    def __post_init__(self):
        if self.op in ("<=", ">"):
            v = float(self.value)
            if not math.isfinite(v):
                raise ValueError("split threshold must be finite")
            object.__setattr__(self, "value", v)
        elif self.op in ("in", "not in"):
            object.__setattr__(self, "value", tuple(sorted(int(v) for v in self.value)))
        else:
            raise ValueError(f"unknown comparison {self.op!r}")

    def negate(self) -> "SplitRule":
        flip = {"<=": ">", ">": "<=", "in": "not in", "not in": "in"}
        return SplitRule(self.variable, flip[self.op], self.value)

    def holds(self, x: np.ndarray) -> np.ndarray:
        """Boolean per value; NaN (missing) never satisfies a condition."""
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            if self.op == "<=":
                out = x <= self.value
            elif self.op == ">":
                out = x > self.value
            else:
                out = np.isin(x, np.asarray(self.value, dtype=np.float64))
                if self.op == "not in":
                    out = ~out
        return out & ~np.isnan(x)

    def to_json(self) -> dict:
        v = list(self.value) if isinstance(self.value, tuple) else self.value
        return {"variable": self.variable, "op": self.op, "value": v}

    @classmethod
    def from_json(cls, obj) -> "SplitRule":
        return cls(obj["variable"], obj["op"], obj["value"])

    def __str__(self):
        if isinstance(self.value, tuple):
            return f"{self.variable} {self.op} {{{', '.join(map(str, self.value))}}}"
        return f"{self.variable} {self.op} {self.value:.6g}"


@dataclass(frozen=True)
class Signature:
    conditions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))

    @property
    def empty(self) -> bool:
        return not self.conditions

    def variables(self) -> list:
        return [c.variable for c in self.conditions]

    def to_json(self) -> list:
        return [c.to_json() for c in self.conditions]

    @classmethod
    def from_json(cls, obj: Iterable) -> "Signature":
        return cls(tuple(SplitRule.from_json(o) for o in obj))

    def __str__(self):
        return " and ".join(map(str, self.conditions)) if self.conditions else "(all)"


def signature_mask(d: Dataset, s: Signature) -> np.ndarray:
    mask = np.ones(d.n, dtype=bool)
    for cond in s.conditions:
        mask &= cond.holds(d.covariates[:, d.column(cond.variable)])
    return mask


def apply_signature(d: Dataset, s: Signature) -> tuple[np.ndarray, np.ndarray]:
    """Split row indices into (members, non-members) of signature ``s``.

    Rows missing any signature variable are non-members; an empty signature
    makes every row a member.
    """
    mask = signature_mask(d, s)
    return np.flatnonzero(mask), np.flatnonzero(~mask)
