"""Effect tables for applying a signature to a second dataset."""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset, Signature, apply_signature


def arm_difference(d: Dataset, rows) -> float:
    """Observed treated-minus-control mean response over ``rows`` (NaN if an arm is absent)."""
    rows = np.asarray(rows, dtype=np.int64)
    t = d.treatment[rows] == 1
    if not t.any() or t.all():
        return math.nan
    y = d.response[rows]
    return float(y[t].mean() - y[~t].mean())


def transfer_table(first: Dataset, second: Dataset, s: Signature, first_effect=None) -> list:
    """Overall / inside / outside effects on both datasets.

    ``first_effect`` holds per-row effects on the first dataset (the ITEs of
    the fit); without it, observed arm differences are used there too. The
    second dataset always uses observed arm differences because no model is
    refitted on it.
    """
    rows = []
    in1, out1 = apply_signature(first, s)
    in2, out2 = apply_signature(second, s)
    label = str(s)
    groups = [("Overall", np.arange(first.n), np.arange(second.n)),
              (label, in1, in2), (f"not ({label})", out1, out2)]
    for name, r1, r2 in groups:
        if first_effect is None:
            e1 = arm_difference(first, r1)
        else:
            e1 = float(np.mean(np.asarray(first_effect)[r1])) if len(r1) else math.nan
        rows.append({"group": name, "first": e1, "firstN": int(len(r1)),
                     "second": arm_difference(second, r2), "secondN": int(len(r2))})
    return rows


def transfer_markdown(rows) -> str:
    def f(v):
        return "n/a" if v is None or math.isnan(v) else f"{v:.2f}"

    lines = ["| Patient Group | First dataset | Second dataset |", "|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['group']} | {f(r['first'])} (n={r['firstN']}) | "
                     f"{f(r['second'])} (n={r['secondN']}) |")
    return "\n".join(lines) + "\n"
