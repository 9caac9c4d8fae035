import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ignh.metrics import EvalResult, auc_binary, auc_pair_count, auc_weighted_ovr, evaluate, mse


def brute_twice_u(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return int(2 * (diff > 0).sum() + (diff == 0).sum())


def test_pair_count_matches_brute_force_on_tied_instances():
    r = np.random.default_rng(3)
    done = 0
    while done < 1000:
        n = int(r.integers(2, 201))
        labels = r.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        scores = r.integers(0, int(r.integers(1, 15)), n).astype(float)
        twice_u, n_pos, n_neg = auc_pair_count(scores, labels)
        assert twice_u == brute_twice_u(scores, labels)
        assert (n_pos, n_neg) == (int(labels.sum()), n - int(labels.sum()))
        done += 1


def test_simple_cases():
    assert auc_binary([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc_binary([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert auc_binary([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        auc_binary([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=2, max_size=60))
def test_auc_properties(pairs):
    s = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs])
    if y.min() == y.max():
        return
    a = auc_binary(s, y)
    assert auc_binary(np.exp(s) * 3 + 1, y) == a
    assert a + auc_binary(s, 1 - y) == pytest.approx(1.0, abs=1e-15)


def test_weighted_ovr_two_classes_against_brute_force(rng):
    p1 = rng.random(60)
    P = np.column_stack([1 - p1, p1])
    y = rng.integers(0, 2, 60)
    res = auc_weighted_ovr(P, y)
    sup = np.bincount(y)
    a1 = brute_twice_u(p1, y) / (2 * sup[0] * sup[1])
    a0 = brute_twice_u(1 - p1, 1 - y) / (2 * sup[0] * sup[1])
    assert res.auc == pytest.approx((sup[0] * a0 + sup[1] * a1) / 60, abs=1e-15)
    assert res.support == sup.tolist()


def test_weighted_ovr_edge_cases(rng):
    y = np.array([0, 1, 2, 2, 1, 0])
    assert auc_weighted_ovr(np.eye(3)[y], y).auc == 1.0
    assert auc_weighted_ovr(np.full((6, 3), 1 / 3), y).auc == 0.5
    with pytest.raises(ValueError):
        auc_weighted_ovr(np.full((4, 3), 1 / 3), np.array([0, 1, 1, 0]))
    P = rng.dirichlet(np.ones(3), 90)
    y = rng.integers(0, 3, 90)
    res = auc_weighted_ovr(P, y)
    assert res.auc == pytest.approx(np.dot(res.support, res.per_class_auc) / 90)


def test_evaluate_and_serialization():
    r = evaluate(np.array([0.2, 0.7, 0.4]), np.array([0, 1, 1]), "binary")
    assert r.to_dict() == {"auc": 1.0, "n_pos": 2, "n_neg": 1}
    assert "per_class_auc" in evaluate(np.eye(2)[[0, 1]], np.array([0, 1]), "multiclass").to_dict()
    with pytest.raises(ValueError):
        evaluate(np.zeros(3), np.zeros(3), "regression")
    assert mse([1.0, 2.0], [1.0, 4.0]) == 2.0
    assert isinstance(r, EvalResult)
