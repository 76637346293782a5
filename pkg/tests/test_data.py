import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vgsubgroup.data import (BINARY, CONTINUOUS, DataError, Dataset, Signature, SplitRule,
                             apply_signature, categorical, load_csv, stack_counterfactual,
                             write_csv)


def _write(tmp_path, text, schema):
    p = tmp_path / "d.csv"
    p.write_text(text, encoding="utf-8")
    s = tmp_path / "d.schema.json"
    s.write_text(json.dumps(schema))
    return p, s


SCHEMA = {"response": "Y", "treatment": "T", "covariates": [{"name": "X1", "kind": "continuous"}]}


def test_load_small_file(tmp_path):
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1,5\n1.0,0,6\n3.0,1,7\n0.5,0,8\n", SCHEMA)
    d = load_csv(p, s)
    assert (d.n, d.p) == (4, 1)
    assert d.treatment.tolist() == [1, 0, 1, 0]
    assert d.response.tolist() == [2.0, 1.0, 3.0, 0.5]


def test_treatment_outside_01(tmp_path):
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1,5\n1.0,2,6\n", SCHEMA)
    with pytest.raises(DataError, match=r"treatment not in \{0,1\}"):
        load_csv(p, s)


def test_single_arm_rejected(tmp_path):
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1,5\n1.0,1,6\n", SCHEMA)
    with pytest.raises(DataError, match="single arm"):
        load_csv(p, s)


def test_missing_response_is_error(tmp_path):
    p, s = _write(tmp_path, "Y,T,X1\n,1,5\n1.0,0,6\n", SCHEMA)
    with pytest.raises(DataError, match="response"):
        load_csv(p, s)


def test_malformed_rows(tmp_path):
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1\n1.0,0,6\n", SCHEMA)
    with pytest.raises(DataError, match="fields"):
        load_csv(p, s)
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1,abc\n1.0,0,6\n", SCHEMA)
    with pytest.raises(DataError, match="non-numeric"):
        load_csv(p, s)


def test_kind_violation(tmp_path):
    schema = {**SCHEMA, "covariates": [{"name": "X1", "kind": "binary"}]}
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1,0\n1.0,0,3\n", schema)
    with pytest.raises(DataError, match="binary"):
        load_csv(p, s)
    schema = {**SCHEMA, "covariates": [{"name": "X1", "kind": "categorical", "levels": 2}]}
    p, s = _write(tmp_path, "Y,T,X1\n2.0,1,0\n1.0,0,2\n", schema)
    with pytest.raises(DataError, match="levels"):
        load_csv(p, s)


def test_empty_cells_become_missing_and_infer(tmp_path):
    schema = {"response": "Y", "treatment": "T",
              "covariates": [{"name": "A", "kind": "infer"}, {"name": "B", "kind": "infer"}]}
    p, s = _write(tmp_path, "Y,T,A,B\n1,1,0,2.5\n2,0,1,\n3,1,,1.5\n", schema)
    d = load_csv(p, s)
    assert d.kinds == (BINARY, CONTINUOUS)
    assert d.missing.tolist() == [[False, False], [False, True], [True, False]]


def test_unknown_schema_key(tmp_path):
    p, s = _write(tmp_path, "Y,T,X1\n1,1,0\n2,0,1\n", {**SCHEMA, "extra": 1})
    with pytest.raises(DataError, match="unknown schema keys"):
        load_csv(p, s)


def test_seventeen_covariates(tmp_path):
    rng = np.random.default_rng(0)
    n, p = 30, 17
    x = rng.normal(size=(n, p))
    d = Dataset(rng.normal(size=n), np.arange(n) % 2, x, (CONTINUOUS,) * p,
                tuple(f"C{j}" for j in range(p)))
    path = tmp_path / "c.csv"
    schema = write_csv(d, path)
    assert load_csv(path, schema).p == 17


finite = st.floats(allow_nan=False, allow_infinity=False, width=64, min_value=-1e12, max_value=1e12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(finite, min_size=n, max_size=n),
    st.lists(st.one_of(finite, st.just(float("nan"))), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
    st.permutations([0, 1] + [i % 2 for i in range(n - 2)]),
)))
def test_csv_round_trip_bitwise(tmp_path_factory, cols):
    y, xc, xk, t = cols
    d = Dataset(y, t, np.column_stack([xc, xk]), (CONTINUOUS, categorical(3)), ("a", "b"))
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    schema = write_csv(d, path)
    back = load_csv(path, schema)
    assert back.equals(d)
    assert np.array_equal(back.covariates.view(np.uint64)[~d.missing],
                          d.covariates.view(np.uint64)[~d.missing])


def _ds(t, x, y=None):
    t = np.asarray(t)
    x = np.asarray(x, dtype=float).reshape(len(t), -1)
    y = np.zeros(len(t)) if y is None else y
    return Dataset(y, t, x, (CONTINUOUS,) * x.shape[1], tuple(f"X{j + 1}" for j in range(x.shape[1])))


def test_stack_small_example():
    sd = stack_counterfactual(_ds([1, 0], [[2], [3]]))
    assert sd.t_star.tolist() == [1, 0, 0, 1]
    assert sd.xt[:, 0].tolist() == [2, 0, 0, 3]
    assert sd.x_one_minus_t[:, 0].tolist() == [0, 3, 2, 0]
    assert sd.fit_weight.tolist() == [1, 1, 0, 0]
    assert sd.rows == 4


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(1, 5), st.integers(0, 2**31))
def test_stack_invariants(n, p, seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, n)
    t[0], t[1] = 0, 1
    d = _ds(t, rng.normal(size=(n, p)))
    sd = stack_counterfactual(d)
    assert np.array_equal(sd.t_star[:n], d.treatment)
    assert np.array_equal(sd.t_star[n:], 1 - sd.t_star[:n])
    assert np.array_equal(1 - sd.t_star[n:], d.treatment)
    assert np.array_equal(sd.x_star[:n], d.covariates)
    assert np.array_equal(sd.x_star[n:], sd.x_star[:n])
    assert np.array_equal(sd.xt, sd.t_star[:, None] * sd.x_star)
    assert np.array_equal(sd.x_one_minus_t, (1 - sd.t_star)[:, None] * sd.x_star)
    assert sd.fit_weight[:n].sum() == n and sd.fit_weight[n:].sum() == 0


def test_stack_feature_count_p13():
    rng = np.random.default_rng(1)
    d = _ds(np.arange(10) % 2, rng.normal(size=(10, 13)))
    assert stack_counterfactual(d).features().shape == (20, 40)


def test_apply_signature_boundary_inclusive():
    d = _ds([1, 0, 1], [[2], [4], [3.55]])
    members, others = apply_signature(d, Signature((SplitRule("X1", "<=", 3.55),)))
    assert members.tolist() == [0, 2] and others.tolist() == [1]


def test_apply_empty_signature():
    d = _ds([1, 0, 1], [[2], [4], [3.55]])
    members, others = apply_signature(d, Signature())
    assert members.tolist() == [0, 1, 2] and others.size == 0


def test_signature_sizes_reported():
    x = np.r_[np.linspace(0, 3.5, 93), np.linspace(3.6, 9, 45)]
    d = _ds(np.arange(138) % 2, x[:, None])
    members, others = apply_signature(d, Signature((SplitRule("X1", "<=", 3.55),)))
    assert (members.size, others.size) == (93, 45)


def test_signature_missing_goes_to_nonmembers():
    d = Dataset(np.zeros(3), [0, 1, 0], [[1.0], [np.nan], [5.0]], (CONTINUOUS,), ("X1",))
    for rule in (SplitRule("X1", "<=", 2), SplitRule("X1", ">", 2)):
        members, others = apply_signature(d, Signature((rule,)))
        assert 1 in others


def test_signature_unknown_variable():
    d = _ds([0, 1], [[1], [2]])
    with pytest.raises(KeyError):
        apply_signature(d, Signature((SplitRule("nope", "<=", 1),)))


def test_categorical_rule():
    d = Dataset(np.zeros(4), [0, 1, 0, 1], [[0], [1], [2], [1]], (categorical(3),), ("G",))
    members, _ = apply_signature(d, Signature((SplitRule("G", "in", [1, 2]),)))
    assert members.tolist() == [1, 2, 3]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_signature_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    n = 25
    t = np.arange(n) % 2
    d = _ds(t, rng.normal(size=(n, 2)))
    s = Signature((SplitRule("X1", ">", float(rng.normal())), SplitRule("X2", "<=", 0.3)))
    perm = rng.permutation(n)
    m0, _ = apply_signature(d, s)
    m1, _ = apply_signature(d.take(perm), s)
    assert sorted(perm[m1].tolist()) == m0.tolist()


def test_thresholds_must_be_finite():
    with pytest.raises(ValueError):
        SplitRule("X1", "<=", float("inf"))


def test_dataset_immutable():
    d = _ds([0, 1], [[1], [2]])
    with pytest.raises(ValueError):
        d.covariates[0, 0] = 9
