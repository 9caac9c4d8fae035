from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from ignh.dataset import CATEGORICAL, NUMERICAL, Feature, Schema
from ignh.graph import Edge, FeatureGraph
from ignh.model import ModelConfig, init_params

DATA = Path(__file__).parent / "data"
TASKS = ("binary", "multiclass", "regression")


def random_graph(rng, m, kinds=None, self_loop=None) -> FeatureGraph:
    kinds = tuple(kinds) if kinds is not None else tuple(rng.choice([NUMERICAL, CATEGORICAL], m))
    edges = tuple(
        Edge(i, j, float(rng.uniform(-1, 1)), "pearson", 0.01)
        for i in range(m) for j in range(i + 1, m) if rng.random() < 0.5
    )
    loop = float(rng.uniform(0.5, 3.0)) if self_loop is None else float(self_loop)
    return FeatureGraph(tuple(f"f{i}" for i in range(m)), kinds, edges, np.full(m, loop), 0.05)


def random_model(rng, m=None, task="binary", n_classes=3, n_tok=3, perturb=0.3, **cfg_kw):
    """Small random graph, config and parameters (jittered off their init)."""
    m = int(rng.integers(2, 7)) if m is None else m
    g = random_graph(rng, m)
    cfg = dict(
        embed_dim=int(rng.integers(1, 5)),
        layer_dims=tuple(int(d) for d in rng.integers(1, 5, size=rng.integers(1, 4))),
        activation=str(rng.choice(["relu", "tanh"])),
        weight_sharing=str(rng.choice(["per_node", "shared"])),
        task=task,
        n_classes=n_classes,
    )
    cfg.update(cfg_kw)
    config = ModelConfig(**cfg)
    n_tokens = {i: n_tok for i in range(m) if g.kinds[i] == CATEGORICAL}
    params = init_params(g, n_tokens, config, rng)
    for k in params:
        params[k] = np.asarray(params[k] + rng.normal(0, perturb, params[k].shape))
        if config.anchored and k.startswith("embed."):
            params[k][0] = 0.0
    return g, config, params, n_tokens


def random_inputs(rng, g, n, n_tok=3):
    X = rng.normal(size=(n, g.n_nodes))
    for i, k in enumerate(g.kinds):
        if k == CATEGORICAL:
            X[:, i] = rng.integers(0, n_tok + 1, n)
    return X


def mixed_dataset(rng, n, task="binary", noise=0.5, n_classes=3):
    """8 heterogeneous features (3 categorical, 5 numerical) with a known signal.

    Returns ``(rows, schema)`` where ``rows`` are lists of strings ready for CSV.
    """
    colors = np.array(["red", "green", "blue"])
    sizes = np.array(["S", "M", "L", "XL"])
    flags = np.array(["yes", "no"])
    c0 = rng.integers(0, 3, n)
    c1 = rng.integers(0, 4, n)
    c2 = rng.integers(0, 2, n)
    x = rng.normal(size=(n, 5))
    x[:, 1] += 0.6 * x[:, 0]
    x[:, 3] += 0.5 * c1
    signal = (1.2 * x[:, 0] - 0.8 * x[:, 2] + 0.6 * x[:, 3] + 0.9 * (c0 == 0) - 0.7 * (c2 == 1)
              + 0.4 * np.sin(2 * x[:, 4]))
    signal = signal + noise * rng.normal(size=n)
    if task == "binary":
        y = np.where(signal > np.median(signal), "pos", "neg")
    elif task == "multiclass":
        cuts = np.quantile(signal, np.linspace(0, 1, n_classes + 1)[1:-1])
        y = np.array([f"k{int(v)}" for v in np.searchsorted(cuts, signal)])
    else:
        y = np.array([repr(float(v)) for v in signal])
    names = ["color", "size", "flag", "a", "b", "c", "d", "e"]
    kinds = [CATEGORICAL] * 3 + [NUMERICAL] * 5
    cols = [colors[c0], sizes[c1], flags[c2]] + [[repr(float(v)) for v in x[:, j]] for j in range(5)]
    rows = [[str(col[r]) for col in cols] + [str(y[r])] for r in range(n)]
    schema = Schema(tuple(Feature(nm, k) for nm, k in zip(names, kinds)), "label", task)
    return names, rows, schema


def write_dataset(tmp_path: Path, names, rows, schema, stem="data"):
    data = tmp_path / f"{stem}.csv"
    with data.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + [schema.target])
        w.writerows(rows)
    sch = tmp_path / f"{stem}.schema.json"
    sch.write_text(json.dumps(schema.to_dict()))
    return data, sch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def abalone_paths():
    return DATA / "abalone.csv", DATA / "abalone.schema.json"
