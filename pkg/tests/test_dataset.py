import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ignh.dataset import (
    CATEGORICAL,
    NUMERICAL,
    EncoderState,
    Feature,
    RawTable,
    Schema,
    SchemaError,
    encode,
    fit_encoders,
    infer_class_labels,
    load_csv,
    load_schema,
    oversample_minority,
    split,
    split_sizes,
)


def _schema(task="binary", labels=None):
    return Schema((Feature("c", CATEGORICAL), Feature("x", NUMERICAL)), "y", task, labels)


def test_schema_rejects_duplicates_and_target_as_feature():
    with pytest.raises(SchemaError):
        Schema((Feature("a", NUMERICAL), Feature("a", NUMERICAL)), "y", "binary")
    with pytest.raises(SchemaError):
        Schema((Feature("y", NUMERICAL),), "y", "binary")
    with pytest.raises(SchemaError):
        Feature("a", "ordinal")


def test_schema_json_round_trip_and_digest(tmp_path):
    s = _schema(labels=("a", "b"))
    p = tmp_path / "s.json"
    p.write_text(json.dumps(s.to_dict()))
    back = load_schema(p)
    assert back == s
    assert back.digest() == s.digest()
    assert _schema(labels=("b", "a")).digest() != s.digest()


def test_load_csv_missing_cells_and_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,c,y\n1.5,red,a\n,blue,b\n2,,a\n")
    t = load_csv(p, _schema())
    assert t.column("x") == ["1.5", None, "2"]
    assert t.column("c") == ["red", "blue", None]
    assert t.missing_counts() == {"c": 1, "x": 1, "y": 0}

    p.write_text("x,c,y\n1.5,red,a\nabc,blue,b\n")
    with pytest.raises(SchemaError, match="row 3.*'x'"):
        load_csv(p, _schema())
    p.write_text("x,y\n1,a\n")
    with pytest.raises(SchemaError, match="missing column 'c'"):
        load_csv(p, _schema())
    p.write_text("x,c\n1,a\n")
    assert load_csv(p, _schema(), require_target=False).n_rows == 1


def test_encoders_fit_on_training_rows_only():
    train = RawTable({"c": ["u", "v", "u", None], "x": ["1", "2", "3", None], "y": ["a"] * 4})
    st_ = fit_encoders(train, _schema())
    assert st_.tokens["c"] == {"u": 1, "v": 2}
    assert st_.means["x"] == 2.0
    assert st_.stds["x"] == pytest.approx(np.sqrt(2 / 3), abs=1e-15)
    test = RawTable({"c": ["w", "v", None], "x": ["2", None, "5"], "y": ["a", "a", "a"]})
    enc = encode(test, st_, _schema(), ("a", "b"))
    # unseen category and missing share token 0; missing numerical sits at the mean
    assert enc.X[:, 0].tolist() == [0.0, 2.0, 0.0]
    assert enc.X[0, 1] == 0.0 and enc.X[1, 1] == 0.0
    assert enc.X[2, 1] == pytest.approx(3 / np.sqrt(2 / 3))
    assert enc.missing.tolist() == [[False, False], [False, True], [True, False]]
    assert enc.y.tolist() == [0, 0, 0]


def test_constant_feature_encodes_to_zero():
    t = RawTable({"c": ["u", "u"], "x": ["4", "4"], "y": ["a", "b"]})
    st_ = fit_encoders(t, _schema())
    assert st_.is_constant("x")
    assert encode(t, st_, _schema(), ("a", "b")).X[:, 1].tolist() == [0.0, 0.0]


def test_encoder_state_round_trip_and_decode():
    t = RawTable({"c": ["u", "v"], "x": ["1", "3"], "y": ["a", "b"]})
    st_ = fit_encoders(t, _schema())
    back = EncoderState.from_dict(json.loads(json.dumps(st_.to_dict())))
    assert back == st_
    assert back.decode("c", 2.0) == "v" and back.decode("c", 0.0) is None
    assert back.decode("x", 1.0) == pytest.approx(3.0)


def test_unknown_label_rejected():
    t = RawTable({"c": ["u"], "x": ["1"], "y": ["zzz"]})
    with pytest.raises(SchemaError, match="zzz"):
        encode(t, fit_encoders(t, _schema()), _schema(), ("a", "b"))


def test_class_labels_sorted_unless_given():
    t = RawTable({"c": ["u"] * 3, "x": ["1"] * 3, "y": ["b", "a", "b"]})
    assert infer_class_labels(t, _schema()) == ("a", "b")
    assert infer_class_labels(t, _schema(labels=("b", "a"))) == ("b", "a")


def test_split_sizes_floor_rule():
    assert split_sizes(4177, (0.6, 0.2002, 0.1998)) == (2506, 836, 835)
    assert split_sizes(10, (0.8, 0.1, 0.1)) == (8, 1, 1)
    with pytest.raises(ValueError):
        split_sizes(10, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        split_sizes(3, (0.9, 0.05, 0.05))


def test_split_is_deterministic_and_exhaustive():
    t = RawTable({"c": [str(i) for i in range(50)], "x": ["0"] * 50, "y": ["a"] * 50})
    a = split(t, (0.6, 0.2, 0.2), seed=3)
    b = split(t, (0.6, 0.2, 0.2), seed=3)
    assert [p.columns for p in a] == [p.columns for p in b]
    ids = sum((p.column("c") for p in a), [])
    assert sorted(ids, key=int) == [str(i) for i in range(50)]
    assert [p.n_rows for p in a] == [30, 10, 10]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=80), st.integers(0, 2**31))
def test_oversampling_balances_exactly(labels, seed):
    y = np.array(labels)
    if y.min() == y.max():
        return
    from ignh.dataset import EncodedMatrix

    mat = EncodedMatrix(np.arange(len(y), dtype=float)[:, None], y, np.zeros((len(y), 1), bool),
                        Schema((Feature("x", NUMERICAL),), "y", "binary"))
    out = oversample_minority(mat, seed)
    counts = np.bincount(out.y, minlength=2)
    assert counts[0] == counts[1] == np.bincount(y).max()
    # originals first, duplicates drawn from the minority class
    assert np.array_equal(out.X[: len(y), 0], np.arange(len(y)))
    assert set(out.y[len(y):].tolist()) <= {int(np.argmin(np.bincount(y)))}


def test_oversampling_leaves_other_tasks_alone():
    from ignh.dataset import EncodedMatrix

    mat = EncodedMatrix(np.zeros((3, 1)), np.array([0, 1, 1]), np.zeros((3, 1), bool),
                        Schema((Feature("x", NUMERICAL),), "y", "multiclass"))
    assert oversample_minority(mat, 0) is mat
