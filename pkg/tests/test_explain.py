import csv
import json

import numpy as np
import pytest

from conftest import random_inputs, random_model
from ignh.explain import AttributionReport, attribute, top_k, write_reports_json, write_top_k_csv
from ignh.model import forward, link


@pytest.mark.parametrize("task", ["binary", "multiclass", "regression"])
def test_reports_are_additive_and_match_predictions(rng, task):
    g, cfg, p, _ = random_model(rng, task=task)
    X = random_inputs(rng, g, 20)
    reps = attribute(X, p, g, cfg)
    z = forward(X, p, g, cfg).z
    probs = link(z, task)
    for r, rep in enumerate(reps):
        assert abs(rep.bias + np.sum(rep.scores) - rep.logit) < 1e-9
        if task == "multiclass":
            c = int(np.argmax(probs[r]))
            assert rep.predicted_class == c
            assert rep.logit == z[r, c] and rep.prediction == probs[r, c]
        else:
            assert rep.prediction == probs[r]
            assert link(np.array(rep.logit), task) == rep.prediction


def test_all_classes_reports(rng):
    g, cfg, p, _ = random_model(rng, task="multiclass", n_classes=4)
    X = random_inputs(rng, g, 5)
    for rep in attribute(X, p, g, cfg, all_classes=True, class_labels=list("abcd")):
        assert rep.scores.shape == (g.n_nodes, 4)
        assert np.allclose(rep.bias + rep.scores.sum(axis=0), rep.logit, atol=1e-12)
        assert rep.predicted_class in "abcd"
        d = rep.to_dict()
        assert len(d["features"][0]["score"]) == 4


def test_top_k_ordering_and_ties():
    rep = AttributionReport(0, ["a", "b", "c", "d"], [1, 2, 3, 4], np.array([0.5, -2.0, 0.5, 2.0]),
                            0.1, 1.6, 0.8)
    assert top_k(rep, 10) == [1, 3, 0, 2]
    assert top_k(rep, 2) == [1, 3]
    with pytest.raises(ValueError):
        top_k(rep, 0)


def test_json_and_csv_output(tmp_path, rng):
    g, cfg, p, _ = random_model(rng, task="binary")
    X = random_inputs(rng, g, 3)
    reps = attribute(X, p, g, cfg, instance_ids=["r1", "r2", "r3"], class_labels=["no", "yes"])
    write_reports_json(reps, tmp_path / "e.json")
    doc = json.loads((tmp_path / "e.json").read_text())
    assert doc[0]["instance_id"] == "r1" and doc[0]["sorted"] is False
    assert {"instance_id", "prediction", "bias", "features"} <= set(doc[0])
    assert [f["name"] for f in doc[0]["features"]] == list(g.names)
    total = doc[1]["bias"] + sum(f["score"] for f in doc[1]["features"])
    assert total == pytest.approx(doc[1]["logit"], abs=1e-9)
    write_top_k_csv(reps, 2, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0][:3] == ["instance_id", "rank", "feature"]
    assert len(rows) == 1 + 3 * min(2, g.n_nodes)
