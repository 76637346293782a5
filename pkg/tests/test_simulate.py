import json
import math

import numpy as np
import pytest
from scipy import stats

from vgsubgroup.rng import stream
from vgsubgroup.simulate import (PRESETS, Scenario, gen_covariates, gen_outcome,
                                 gen_scenario_dataset, gen_treatment, load_scenario, preset)


def test_treatment_balance_and_determinism():
    t = gen_treatment(100_000, stream(4, "t"))
    assert abs(t.mean() - 0.5) < 0.01
    assert np.array_equal(t, gen_treatment(100_000, stream(4, "t")))
    assert not np.array_equal(t, gen_treatment(100_000, stream(5, "t")))


def test_continuous_columns_moments_and_correlation():
    x = gen_covariates(100_000, ["continuous", "continuous"], seed=1)
    assert abs(np.corrcoef(x.T)[0, 1] - 0.5) < 0.02
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.03)


def test_binary_column_mean():
    means = [gen_covariates(50, ["binary"], seed=s).mean() for s in range(10_000)]
    assert abs(np.mean(means) - 0.4) < 0.02


def test_binary_independent_of_continuous():
    x = gen_covariates(100_000, ["continuous", "binary"], seed=2)
    assert abs(np.corrcoef(x.T)[0, 1]) < 0.02


def test_pure_noise_variance():
    scn = Scenario("zero", 0.0, 0.0, 0.0, None, None)
    y, x0, member = gen_outcome(scn, None, None, np.zeros(100_000), stream(0, "e"))
    assert abs(y.var() - 0.25) < 0.01
    assert x0 is None and not member.any()


def test_plug_in_response():
    scn = preset("no-prognostic")
    x = np.array([-1.0, 1.0, 1.0, -1.0])
    t = np.array([1, 1, 0, 0])
    y, x0, member = gen_outcome(scn, x, None, t, stream(0), noise=np.zeros(4))
    assert x0 == 0.0
    assert y.tolist() == pytest.approx([0.2, 0.7, 0.0, 0.0], abs=1e-15)
    assert member.tolist() == [False, True, True, False]


@pytest.mark.parametrize("name,p", [("no-prognostic", 14), ("no-prognostic-mix", 14),
                                    ("mix-prognostic", 15)])
def test_preset_shapes(name, p):
    d, truth = gen_scenario_dataset(preset(name), 0)
    assert (d.n, d.p) == (400, p)
    assert d.names == tuple(f"X{j}" for j in range(1, p + 1))
    assert truth.pred_name == d.names[truth.pred_index]
    kind = preset(name).pred_kind
    assert d.kinds[truth.pred_index].kind == kind


def test_membership_proportion():
    scn = preset("no-prognostic")
    props = [gen_scenario_dataset(scn, s)[1].membership.mean() for s in range(100)]
    assert abs(np.mean(props) - 0.5) < 0.05


def test_membership_is_cut_at_sample_mean():
    d, truth = gen_scenario_dataset(preset("no-prognostic"), 3)
    x = d.covariates[:, truth.pred_index]
    assert truth.x0 == pytest.approx(x.mean(), abs=0)
    assert np.array_equal(truth.membership, x > truth.x0)


def test_null_t_test_nominal():
    scn = Scenario("all-zero", 0.0, 0.0, 0.0, "continuous", None, n=100)
    rejections = 0
    for s in range(1000):
        d, _ = gen_scenario_dataset(scn, s)
        t = d.treatment == 1
        rejections += stats.ttest_ind(d.response[t], d.response[~t]).pvalue < 0.05
    assert abs(rejections / 1000 - 0.05) < 0.02


def test_null_twin_shares_streams():
    scn = preset("mix-prognostic")
    a, ta = gen_scenario_dataset(scn, 7)
    b, tb = gen_scenario_dataset(scn.null_twin(), 7)
    assert np.array_equal(a.covariates, b.covariates)
    assert np.array_equal(a.treatment, b.treatment)
    diff = a.response - b.response
    expected = 0.5 * ta.membership * a.treatment
    np.testing.assert_allclose(diff, expected, atol=1e-12)


def test_adding_a_column_keeps_others():
    a = gen_covariates(200, ["continuous", "binary"], seed=3, keys=["u", "v"])
    b = gen_covariates(200, ["continuous", "binary", "continuous"], seed=3, keys=["u", "v", "w"])
    assert np.array_equal(a, b[:, :2])


def test_column_order_varies_with_seed():
    where = {gen_scenario_dataset(preset("no-prognostic"), s)[1].pred_index for s in range(20)}
    assert len(where) > 3


def test_deterministic():
    a, _ = gen_scenario_dataset(preset("no-prognostic-mix"), 11)
    b, _ = gen_scenario_dataset(preset("no-prognostic-mix"), 11)
    assert a.equals(b)


def test_scenario_json(tmp_path):
    scn = preset("mix-prognostic", n=100)
    back = Scenario.from_json(json.loads(json.dumps(scn.to_json())))
    assert back == scn
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"preset": "no-prognostic", "name": "custom", "betaPred": 0.8}))
    s = load_scenario(path)
    assert s.beta_pred == 0.8 and s.noise_continuous == 13 and s.stream_key == "custom"
    with pytest.raises(ValueError, match="unknown scenario keys"):
        Scenario.from_json({"name": "x", "bogus": 1, "betaPred": 0, "betaProg": 0, "betaTrt": 0})


def test_invalid_scenarios():
    with pytest.raises(ValueError):
        preset("nope")
    with pytest.raises(ValueError):
        Scenario("bad", 0.5, 0.3, 0.2, "continuous", None)
    with pytest.raises(ValueError):
        Scenario("bad", 0.5, 0.0, 0.2, "ordinal", None)


def test_binary_response():
    scn = preset("no-prognostic", response_kind="binary")
    d, _ = gen_scenario_dataset(scn, 0)
    assert set(np.unique(d.response)) <= {0.0, 1.0}
    assert d.response_kind == "binary"


def test_presets_listed():
    assert set(PRESETS) == {"no-prognostic", "no-prognostic-mix", "mix-prognostic"}
    assert all(math.isfinite(s.beta_trt) for s in PRESETS.values())
