"""Monte Carlo operating characteristics: Type I error, power, conditional TDR.

Each iteration simulates an alternative dataset and its null twin (same seed,
predictive effect removed) and runs every requested method once with the
split threshold opened to 1. A method "identifies" a subgroup at threshold
``theta`` when its root split is admissible and the root selection p-value is
``<= theta``, so one fit gives the whole threshold sweep.

Methods are compared at matched Type I error ``alpha`` by taking, for each
method, the largest threshold whose realised null identification rate does
not exceed ``alpha`` (computed exactly from the null root p-values).
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .methods import MethodConfig, run_methods
from .rng import int_seed
from .simulate import Scenario, gen_scenario_dataset

MATCHED_LEVELS = (0.05, 0.1, 0.2, 0.4)


def default_theta_grid(points: int = 50, low: float = 1e-4) -> np.ndarray:
    return np.logspace(math.log10(low), 0.0, points)


@dataclass(frozen=True, eq=False)
class TrialOutcome:
    method: str
    scenario: str
    seed: int
    null: bool
    root_pvalue: float
    splittable: bool
    root_variable: str | None
    root_cut: object
    flags: np.ndarray = field(repr=False)
    pred_name: str | None = None
    x0: float | None = None

    def identified_at(self, theta: float) -> bool:
        return self.splittable and theta > 0 and self.root_pvalue <= theta

    @property
    def correct(self) -> bool:
        return self.root_variable is not None and self.root_variable == self.pred_name

    def to_json(self) -> dict:
        return {
            "method": self.method, "scenario": self.scenario, "seed": self.seed,
            "null": self.null,
            "rootPValue": None if math.isinf(self.root_pvalue) else self.root_pvalue,
            "splittable": self.splittable, "rootVariable": self.root_variable,
            "rootCut": list(self.root_cut) if isinstance(self.root_cut, tuple) else self.root_cut,
            "predName": self.pred_name, "x0": self.x0,
        }


def _trial(args):
    scn, methods, i, seed0, cfg, grid = args
    out = []
    seed = int_seed(seed0, "dataset", i)
    for null, s in ((False, scn), (True, scn.null_twin())):
        d, truth = gen_scenario_dataset(s, seed)
        fit_seed = int_seed(seed0, "fit", i, int(null))
        results = run_methods(d, methods, cfg, fit_seed)
        for m in methods:
            r = results[m]
            root = r.tree.root
            splittable = root.rule is not None
            p = r.root_pvalue
            flags = np.array([splittable and th > 0 and p <= th for th in grid], dtype=bool)
            out.append(TrialOutcome(
                m, scn.name, seed, null, p, splittable,
                root.rule.variable if splittable else None,
                root.rule.value if splittable else None,
                flags, truth.pred_name, truth.x0,
            ))
    return out


def run_trials(scn: Scenario, methods, iterations: int, theta_grid=None, seed0: int = 0,
               cfg: MethodConfig = MethodConfig(), threads: int = 1) -> list:
    """Alternative and null-twin outcomes for ``iterations`` seeds and each method.

    Results are identical for any ``threads`` value.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    grid = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0) or grid.min() < 0 or grid.max() > 1:
        raise ValueError("theta grid must be sorted within [0, 1]")
    methods = [m.lower() for m in methods]
    cfg = replace(cfg, tree=replace(cfg.tree, theta=1.0))
    jobs = [(scn, methods, i, seed0, cfg, grid) for i in range(iterations)]
    if threads <= 1:
        chunks = [_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(_trial, jobs))
    return [o for chunk in chunks for o in chunk]


# --------------------------------------------------------------------------
# Rates

def _rate_se(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return math.nan, math.nan
    r = k / n
    return r, math.sqrt(r * (1 - r) / n)


def type1_error(null_outcomes, theta: float) -> float:
    flags = [o.identified_at(theta) for o in null_outcomes]
    return sum(flags) / len(flags)


def power(alt_outcomes, theta: float) -> float:
    flags = [o.identified_at(theta) for o in alt_outcomes]
    return sum(flags) / len(flags)


def conditional_tdr(alt_outcomes, theta: float) -> tuple[float | None, int]:
    """Fraction of identified trials whose root split uses the predictive
    variable, with the identified count. ``None`` when nothing was identified."""
    hits = [o for o in alt_outcomes if o.identified_at(theta)]
    if not hits:
        return None, 0
    return sum(o.correct for o in hits) / len(hits), len(hits)


def _null_cutoff(null_outcomes, alpha: float) -> float:
    """Smallest p-value that must be excluded to keep the null rate <= alpha:
    alternative trials count as identified when ``p < cutoff``."""
    ps = np.sort([o.root_pvalue for o in null_outcomes if o.splittable])
    ps = ps[np.isfinite(ps)]
    k = int(math.floor(alpha * len(null_outcomes) + 1e-9))
    if k >= ps.size:
        return math.inf
    return float(ps[k])


def matched_point(null_outcomes, alt_outcomes, alpha: float) -> dict:
    """Operating point of one method at matched Type I error ``alpha``."""
    cut = _null_cutoff(null_outcomes, alpha)

    def hit(o):
        return o.splittable and o.root_pvalue < cut and o.root_pvalue <= 1.0

    n_null, n_alt = len(null_outcomes), len(alt_outcomes)
    fp = sum(hit(o) for o in null_outcomes)
    found = [o for o in alt_outcomes if hit(o)]
    t1, t1_se = _rate_se(fp, n_null)
    pw, pw_se = _rate_se(len(found), n_alt)
    if found:
        tdr, tdr_se = _rate_se(sum(o.correct for o in found), len(found))
    else:
        tdr, tdr_se = None, None
    return {"alpha": alpha, "type1": t1, "type1SE": t1_se, "power": pw, "powerSE": pw_se,
            "tdr": tdr, "tdrSE": tdr_se, "nIdentified": len(found),
            "pCutoff": None if math.isinf(cut) else cut}


@dataclass(eq=False)
class MetricsCurve:
    method: str
    scenario: str
    thetas: np.ndarray
    type1: np.ndarray
    power: np.ndarray
    tdr: np.ndarray
    type1_se: np.ndarray
    power_se: np.ndarray
    tdr_se: np.ndarray
    n_identified: np.ndarray
    n_null: int
    n_alt: int
    matched: list = field(default_factory=list)
    operating: list = field(default_factory=list, repr=False)

    def at(self, alpha: float) -> dict:
        for row in self.matched:
            if abs(row["alpha"] - alpha) < 1e-12:
                return row
        raise KeyError(alpha)


def split_outcomes(outcomes) -> dict:
    """Group outcomes as ``{(scenario, method): (null list, alt list)}``."""
    groups = {}
    for o in outcomes:
        nul, alt = groups.setdefault((o.scenario, o.method), ([], []))
        (nul if o.null else alt).append(o)
    return groups


def build_curves(outcomes, theta_grid=None, levels=MATCHED_LEVELS) -> list:
    """One :class:`MetricsCurve` per (scenario, method) in first-seen order."""
    grid = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, dtype=np.float64)
    curves = []
    for (scn, method), (nul, alt) in split_outcomes(outcomes).items():
        n0, n1 = len(nul), len(alt)
        t1 = np.empty(grid.size); pw = np.empty(grid.size); td = np.empty(grid.size)
        t1s = np.empty(grid.size); pws = np.empty(grid.size); tds = np.empty(grid.size)
        nid = np.zeros(grid.size, dtype=np.int64)
        for i, th in enumerate(grid):
            t1[i], t1s[i] = _rate_se(sum(o.identified_at(th) for o in nul), n0)
            k = sum(o.identified_at(th) for o in alt)
            pw[i], pws[i] = _rate_se(k, n1)
            r, nid[i] = conditional_tdr(alt, th)
            if r is None:
                td[i] = tds[i] = math.nan
            else:
                td[i], tds[i] = _rate_se(round(r * nid[i]), int(nid[i]))
        matched = [matched_point(nul, alt, a) for a in levels]
        steps = sorted({j / n0 for j in range(n0 + 1)}) if n0 else []
        operating = [matched_point(nul, alt, a) for a in steps]
        curves.append(MetricsCurve(method, scn, grid, t1, pw, td, t1s, pws, tds, nid,
                                   n0, n1, matched, operating))
    return curves


# --------------------------------------------------------------------------
# Serialisation

def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def curves_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "method", "theta", "type1", "power", "tdr",
                "type1_se", "power_se", "tdr_se", "n_identified", "n_null", "n_alt"])
    for c in curves:
        for i, th in enumerate(c.thetas):
            w.writerow([c.scenario, c.method, _num(th), _num(c.type1[i]), _num(c.power[i]),
                        _num(c.tdr[i]), _num(c.type1_se[i]), _num(c.power_se[i]),
                        _num(c.tdr_se[i]), int(c.n_identified[i]), c.n_null, c.n_alt])
    return buf.getvalue()


def comparison_rows(curves) -> list:
    rows = []
    for c in curves:
        for m in c.matched:
            rows.append({"scenario": c.scenario, "method": c.method, **m})
    return rows


def comparison_json(curves) -> str:
    return json.dumps(comparison_rows(curves), indent=2) + "\n"


def comparison_markdown(curves) -> str:
    def f(v, se=None):
        if v is None:
            return "n/a"
        return f"{v:.3f}" if se is None else f"{v:.3f} ± {se:.3f}"

    lines = ["| scenario | method | target Type I | realised Type I | power | cond. TDR | identified |",
             "|---|---|---|---|---|---|---|"]
    for r in comparison_rows(curves):
        lines.append(f"| {r['scenario']} | {r['method'].upper()} | {r['alpha']:.2f} | "
                     f"{f(r['type1'])} | {f(r['power'], r['powerSE'])} | "
                     f"{f(r['tdr'], r['tdrSE'])} | {r['nIdentified']} |")
    return "\n".join(lines) + "\n"


def outcomes_json(outcomes) -> str:
    return json.dumps([o.to_json() for o in outcomes], indent=1) + "\n"
