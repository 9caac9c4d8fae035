import numpy as np
import pytest

from conftest import random_inputs, random_model
from ignh.dataset import CATEGORICAL, NUMERICAL
from ignh.graph import Edge, FeatureGraph
from ignh.model import (
    ModelConfig,
    ModelParams,
    embed_inputs,
    forward,
    init_params,
    link,
    message_pass,
    predict,
    sigmoid,
    softmax,
)


def loop_message_pass(H, graph, W, bias, act, normalized):
    """Per-node, per-neighbor evaluation of one aggregation round."""
    B, m, _ = H.shape
    out = np.zeros((B, m, W.shape[-1]))
    for b in range(B):
        for i in range(m):
            wii = graph.self_loop[i]
            nbrs = [(e.j if e.i == i else e.i, e.weight) for e in graph.edges if i in (e.i, e.j)]
            norm = wii + sum(abs(w) for _, w in nbrs) if normalized else 1.0
            agg = wii / norm * H[b, i]
            for u, w in nbrs:
                agg = agg + w / norm * H[b, u]
            Wi = W[i] if W.shape[0] > 1 else W[0]
            pre = agg @ Wi
            if bias is not None:
                pre = pre + (bias[i] if bias.shape[0] > 1 else bias[0])
            out[b, i] = np.maximum(pre, 0) if act == "relu" else np.tanh(pre)
    return out


@pytest.mark.parametrize("aggregation", ["raw", "normalized"])
@pytest.mark.parametrize("sharing", ["per_node", "shared"])
@pytest.mark.parametrize("anchored", [True, False])
def test_message_pass_matches_loop_oracle(rng, aggregation, sharing, anchored):
    for _ in range(5):
        g, cfg, p, _ = random_model(rng, aggregation=aggregation, weight_sharing=sharing, anchored=anchored)
        H = rng.normal(size=(4, g.n_nodes, cfg.embed_dim))
        got, _, _ = message_pass(H, g, p, 0, cfg.activation, aggregation)
        ref = loop_message_pass(H, g, p["mp.0.weight"], p.get("mp.0.bias"), cfg.activation,
                                aggregation == "normalized")
        assert np.allclose(got, ref, rtol=1e-13, atol=1e-13)


def test_embedding_lookup_and_projection(rng):
    g, cfg, p, ntok = random_model(rng, m=4, anchored=False)
    X = random_inputs(rng, g, 6)
    H = embed_inputs(X, p, g)
    num = [i for i, k in enumerate(g.kinds) if k == NUMERICAL]
    for i, k in enumerate(g.kinds):
        if k == CATEGORICAL:
            assert np.array_equal(H[:, i], p[f"embed.{i}"][X[:, i].astype(int)])
        else:
            row = num.index(i)
            assert np.allclose(H[:, i], X[:, i, None] * p["num.weight"][row] + p["num.bias"][row])
    if ntok:
        bad = X.copy()
        bad[0, next(iter(ntok))] = 99
        with pytest.raises(IndexError):
            embed_inputs(bad, p, g)


@pytest.mark.parametrize("task", ["binary", "multiclass", "regression"])
def test_readout_is_additive(rng, task):
    for _ in range(10):
        g, cfg, p, _ = random_model(rng, task=task)
        X = random_inputs(rng, g, 9)
        c = forward(X, p, g, cfg)
        assert np.abs(c.z - (p["out.bias"] + c.s.sum(axis=1))).max() < 1e-12
        assert np.array_equal(predict(X, p, g, cfg), link(c.z, task))
        expect = (9, g.n_nodes, cfg.n_classes) if task == "multiclass" else (9, g.n_nodes)
        assert c.s.shape == expect


def test_anchored_model_scores_vanish_at_reference(rng):
    for task in ("binary", "multiclass", "regression"):
        g, cfg, p, _ = random_model(rng, task=task)
        c = forward(np.zeros((1, g.n_nodes)), p, g, cfg)
        assert np.all(c.s == 0.0)
        assert np.array_equal(c.z[0], p["out.bias"])


def test_anchored_params_have_no_layer_biases(rng):
    g, cfg, p, ntok = random_model(rng, anchored=True)
    assert not any(k.endswith(".bias") and k != "out.bias" for k in p)
    fresh = init_params(g, ntok, cfg, np.random.default_rng(0))
    for i in ntok:
        assert np.all(fresh[f"embed.{i}"][0] == 0.0)


def test_isolated_node_still_predicts():
    g = FeatureGraph(("a", "b"), (NUMERICAL, NUMERICAL), (), np.ones(2), 0.05)
    cfg = ModelConfig(embed_dim=3, layer_dims=(3, 3))
    p = init_params(g, {}, cfg)
    assert np.isfinite(predict(np.ones((2, 2)), p, g, cfg)).all()


def test_init_is_seeded_and_shaped():
    g = FeatureGraph(("a", "c"), (NUMERICAL, CATEGORICAL), (Edge(0, 1, 0.3, "point_biserial", 0.01),),
                     np.ones(2), 0.05)
    cfg = ModelConfig(embed_dim=4, layer_dims=(5, 6), task="multiclass", n_classes=3, seed=5)
    p1, p2 = init_params(g, {1: 7}, cfg), init_params(g, {1: 7}, cfg)
    assert p1.keys() == p2.keys() and all(np.array_equal(p1[k], p2[k]) for k in p1)
    assert p1["embed.1"].shape == (8, 4)
    assert p1["num.weight"].shape == (1, 4)
    assert p1["mp.0.weight"].shape == (2, 4, 5) and p1["mp.1.weight"].shape == (2, 5, 6)
    assert p1["readout.weight"].shape == (2, 6)
    assert p1["out.weight"].shape == (2, 3) and p1["out.bias"].shape == (3,)
    assert p1.n_layers == 2
    shared = init_params(g, {1: 7}, ModelConfig(embed_dim=4, layer_dims=(5,), weight_sharing="shared"))
    assert shared["mp.0.weight"].shape == (1, 4, 5)


def test_config_validation_and_round_trip():
    cfg = ModelConfig(layer_dims=[8, 8], task="multiclass", n_classes=4, activation="tanh")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (dict(layer_dims=()), dict(activation="gelu"), dict(weight_sharing="x"),
                dict(aggregation="mean"), dict(task="ranking"), dict(task="multiclass", n_classes=1),
                dict(embed_dim=0)):
        with pytest.raises(ValueError):
            ModelConfig(**bad)


def test_links_are_stable():
    z = np.array([-1000.0, -30.0, 0.0, 30.0, 1000.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[-1] == 1.0 and s[2] == 0.5
    sm = softmax(np.array([[1000.0, 0.0, -1000.0], [1.0, 1.0, 1.0]]))
    assert np.allclose(sm.sum(axis=1), 1.0) and np.allclose(sm[1], 1 / 3)
    assert np.array_equal(link(z, "regression"), z)


def test_params_helpers():
    p = ModelParams({"a": np.ones(2), "b": np.zeros((1, 2))})
    q = p.copy()
    q["a"][0] = 5
    assert p["a"][0] == 1
    assert p.is_finite() and not ModelParams({"a": np.array([np.nan])}).is_finite()
    assert all(np.all(v == 0) for v in p.zeros_like().values())
