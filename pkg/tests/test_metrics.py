import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vgsubgroup.metrics import (TrialOutcome, build_curves, comparison_json, comparison_markdown,
                                conditional_tdr, curves_csv, default_theta_grid, matched_point,
                                outcomes_json, power, run_trials, type1_error)
from vgsubgroup.methods import MethodConfig
from vgsubgroup.simulate import preset
from vgsubgroup.tree import TreeConfig


def outcome(p, null=False, var="X1", pred="X1", method="vg", splittable=True):
    return TrialOutcome(method, "s", 0, null, p, splittable, var if splittable else None,
                        0.0 if splittable else None, np.zeros(0, bool), pred, 0.0)


def test_counting_rates():
    nul = [outcome(p, null=True, var="X2") for p in (0.001, 0.2, 0.5, 0.9)]
    alt = [outcome(0.001), outcome(0.01, var="X3"), outcome(0.3), outcome(0.04)]
    assert type1_error(nul, 0.05) == 0.25
    assert power(alt, 0.05) == 0.75
    assert conditional_tdr(alt, 0.05) == (2 / 3, 3)


def test_theta_zero_and_one():
    nul = [outcome(p, null=True) for p in (0.0, 0.2, 1.0)]
    assert type1_error(nul, 0.0) == 0.0
    assert type1_error(nul, 1.0) == 1.0
    assert type1_error([outcome(0.1, null=True, splittable=False)], 1.0) == 0.0


def test_tdr_undefined_when_nothing_found():
    assert conditional_tdr([outcome(0.5)], 0.01) == (None, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40),
       st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_rates_monotone_in_theta(pn, pa):
    nul = [outcome(p, null=True) for p in pn]
    alt = [outcome(p) for p in pa]
    grid = default_theta_grid(20)
    t1 = [type1_error(nul, th) for th in grid]
    pw = [power(alt, th) for th in grid]
    assert np.all(np.diff(t1) >= 0) and np.all(np.diff(pw) >= 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-12, 1), min_size=10, max_size=60), st.sampled_from([0.05, 0.1, 0.2, 0.4]))
def test_matched_type1_never_exceeds_target(pn, alpha):
    nul = [outcome(p, null=True) for p in pn]
    pt = matched_point(nul, [outcome(0.5)], alpha)
    assert pt["type1"] <= alpha + 1e-12


def test_matched_point_cutoff():
    nul = [outcome((i + 1) / 10, null=True) for i in range(10)]
    alt = [outcome(0.05), outcome(0.15), outcome(0.25, var="X9")]
    pt = matched_point(nul, alt, 0.2)
    assert pt["pCutoff"] == 0.3
    assert pt["type1"] == 0.2
    assert pt["power"] == 1.0
    assert pt["tdr"] == pytest.approx(2 / 3)


def test_identical_inputs_identical_curves():
    nul = [outcome(p, null=True, method=m) for m in ("vg", "vt") for p in (0.01, 0.3)]
    alt = [outcome(p, method=m) for m in ("vg", "vt") for p in (0.01, 0.3)]
    a, b = build_curves(nul + alt)
    assert np.array_equal(a.power, b.power) and np.array_equal(a.type1, b.type1)
    assert a.matched[1]["power"] == b.matched[1]["power"]


def test_csv_and_tables():
    nul = [outcome(p, null=True) for p in (0.01, 0.3)]
    alt = [outcome(p) for p in (0.001, 0.3)]
    curves = build_curves(nul + alt, default_theta_grid(5))
    text = curves_csv(curves)
    lines = text.splitlines()
    assert lines[0].startswith("scenario,method,theta")
    assert len(lines) == 6
    assert "vg" in comparison_markdown(curves).lower()
    assert comparison_json(curves).startswith("[")


def test_run_trials_deterministic_and_thread_free():
    cfg = MethodConfig(tree=TreeConfig(20, 1, 1.0))
    scn = preset("no-prognostic", n=120)
    a = run_trials(scn, ["gi"], 4, seed0=3, cfg=cfg, threads=1)
    b = run_trials(scn, ["gi"], 4, seed0=3, cfg=cfg, threads=2)
    assert outcomes_json(a) == outcomes_json(b)
    assert len(a) == 8 and sum(o.null for o in a) == 4


def test_null_twin_uses_same_dataset_seed():
    cfg = MethodConfig(tree=TreeConfig(20, 1, 1.0))
    out = run_trials(preset("no-prognostic", n=100), ["gi"], 2, seed0=1, cfg=cfg)
    seeds = [(o.seed, o.null) for o in out]
    assert seeds[0][0] == seeds[1][0] and seeds[0][1] != seeds[1][1]


def test_bad_grid():
    with pytest.raises(ValueError):
        run_trials(preset("no-prognostic"), ["gi"], 1, theta_grid=[0.5, 0.1])
    assert math.isclose(default_theta_grid()[-1], 1.0)
    assert len(default_theta_grid()) == 50
