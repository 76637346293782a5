import numpy as np
import pytest

from vgsubgroup.counterfactual import (CounterfactualConfig, OracleModel, compute_ite,
                                       design_features, estimate_ite, feature_names,
                                       fit_counterfactual, predict_flipped)
from vgsubgroup.data import CONTINUOUS, Dataset, DataError
from vgsubgroup.simulate import gen_scenario_dataset, preset

FAST = CounterfactualConfig(n_trees=50)
TREE = CounterfactualConfig(backend="single-tree")


def _noiseless(seed, name="no-prognostic"):
    scn = preset(name)
    d, truth = gen_scenario_dataset(scn, seed)
    oracle = OracleModel.from_scenario(scn, truth)
    mu = oracle.predict_rows(d.treatment, d.covariates)
    return d.replace(response=mu), truth, oracle


def test_design_features_layout():
    F = design_features([1, 0], [[2.0, 5.0], [3.0, 7.0]])
    assert F.tolist() == [[1, 2, 5, 2, 5, 0, 0], [0, 3, 7, 0, 0, 3, 7]]
    assert feature_names(["a"]) == ("T", "a", "a:T", "a:(1-T)")


def test_oracle_ite_plug_in():
    d, truth, oracle = _noiseless(0)
    ite = compute_ite(d, predict_flipped(oracle, d)).values
    np.testing.assert_allclose(ite[truth.membership], 0.7, atol=1e-12)
    np.testing.assert_allclose(ite[~truth.membership], 0.2, atol=1e-12)


def test_ite_sign_convention():
    d = Dataset([5.0, 1.0], [1, 0], [[0.0], [1.0]], (CONTINUOUS,), ("X1",))
    ite = compute_ite(d, [2.0, 4.0])
    assert ite.values.tolist() == [3.0, 3.0]
    assert ite.convention == "treatment-minus-control"


def test_sign_coherence_with_shifted_model():
    d, _, _ = _noiseless(1)
    shifted = OracleModel(lambda t, X: 2.0 * t + 1.0)
    ite = compute_ite(d.replace(response=shifted.predict_rows(d.treatment, d.covariates)),
                      predict_flipped(shifted, d))
    np.testing.assert_allclose(ite.values, 2.0)


@pytest.mark.parametrize("cfg", [FAST, TREE])
def test_constant_response_gives_zero_ite(cfg):
    d, _ = gen_scenario_dataset(preset("no-prognostic", n=80), 0)
    d = d.replace(response=np.full(d.n, 3.25))
    ite, model = estimate_ite(d, cfg, 0)
    assert np.all(ite.values == 0.0)
    assert model.constant == 3.25


def test_forest_oob_beats_variance():
    d, _ = gen_scenario_dataset(preset("mix-prognostic"), 2)
    m = fit_counterfactual(d, CounterfactualConfig(n_trees=100, oob=True), 0)
    assert m.metrics["oobMSE"] < m.metrics["responseVariance"]
    assert m.metrics["trainMSE"] < m.metrics["oobMSE"]


def test_binary_predictions_clipped():
    d, _ = gen_scenario_dataset(preset("no-prognostic", response_kind="binary"), 3)
    for cfg in (FAST, TREE):
        m = fit_counterfactual(d, cfg, 0)
        p = predict_flipped(m, d)
        assert p.min() >= 0 and p.max() <= 1


def test_single_tree_flip_is_leaf_value():
    d, _ = gen_scenario_dataset(preset("no-prognostic"), 4)
    m = fit_counterfactual(d, TREE, 0)
    tree, values = m.estimator
    leaf = tree.route(design_features(1 - d.treatment, d.covariates))
    np.testing.assert_array_equal(predict_flipped(m, d), [values[i] for i in leaf])


def test_forest_deterministic_given_seed():
    d, _ = gen_scenario_dataset(preset("no-prognostic", n=120), 5)
    a, _ = estimate_ite(d, FAST, 9)
    b, _ = estimate_ite(d, FAST, 9)
    c, _ = estimate_ite(d, FAST, 10)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_default_feature_subsample():
    assert CounterfactualConfig().feature_subsample(14) == 7
    assert CounterfactualConfig(max_features=3).feature_subsample(14) == 3


def test_schema_mismatch():
    d, _ = gen_scenario_dataset(preset("no-prognostic", n=60), 0)
    m = fit_counterfactual(d, TREE, 0)
    other = Dataset(d.response, d.treatment, d.covariates[:, :3], d.kinds[:3], d.names[:3])
    with pytest.raises(DataError, match="schema"):
        predict_flipped(m, other)


def test_flipped_length_checked():
    d, _ = gen_scenario_dataset(preset("no-prognostic", n=60), 0)
    with pytest.raises(ValueError):
        compute_ite(d, np.zeros(3))


def test_bad_config():
    with pytest.raises(ValueError):
        CounterfactualConfig(backend="svm")
    with pytest.raises(ValueError):
        CounterfactualConfig(n_trees=0)
