"""Losses, reverse-mode gradients, Adam and the early-stopping training loop.

Gradients are derived by hand for the fixed network structure in
:mod:`ignh.model`; the edge and self-loop weights are constants and get no
gradient.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import EncodedMatrix
from .graph import FeatureGraph
from .metrics import evaluate, mse
from .model import (
    ModelConfig,
    ModelParams,
    _layout,
    activate_grad,
    forward,
    init_params,
    link,
    sigmoid,
    softmax,
)
from .seeding import substream

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 20
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "max_epochs", "patience", "batch_size", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    timestamp: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("nan")
    metric_name: str = "auc"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", f"val_{self.metric_name}"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_metric)])


# -- loss -------------------------------------------------------------------

def loss_and_grad(z, y, task: str):
    """Mean loss over the batch and its gradient with respect to ``z``."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    if task == "binary":
        y = np.asarray(y, dtype=np.float64)
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("binary labels must be 0 or 1")
        loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
        return float(loss.mean()), (sigmoid(z) - y) / n
    if task == "multiclass":
        y = np.asarray(y, dtype=np.int64)
        k = z.shape[1]
        if y.min(initial=0) < 0 or y.max(initial=0) >= k:
            raise ValueError(f"multiclass labels must lie in 0..{k - 1}")
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        loss = lse - z[np.arange(n), y]
        g = softmax(z)
        g[np.arange(n), y] -= 1.0
        return float(loss.mean()), g / n
    y = np.asarray(y, dtype=np.float64)
    d = z - y
    return float(np.mean(d * d)), 2.0 * d / n


def loss(z, y, task: str) -> float:
    return loss_and_grad(z, y, task)[0]


# -- backward ---------------------------------------------------------------

def backward(X, y, params: ModelParams, graph: FeatureGraph, config: ModelConfig):
    """Return ``(loss, grads)`` for the batch; ``grads`` mirrors ``params``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cache = forward(X, params, graph, config)
    value, dz = loss_and_grad(cache.z, y, config.task)
    g = params.zeros_like()

    w = params["out.weight"]
    g["out.bias"] = np.asarray(dz.sum(axis=0))
    if w.ndim == 2:
        # s[b, i, c] = r[b, i] * w[i, c]
        g["out.weight"] = np.einsum("bi,bc->ic", cache.r, dz)
        dr = dz @ w.T
    else:
        g["out.weight"] = cache.r.T @ dz
        dr = dz[:, None] * w
    H_last = cache.H[-1]
    g["readout.weight"] = np.einsum("bi,bid->id", dr, H_last)
    dH = dr[:, :, None] * params["readout.weight"]

    adj = graph.adjacency(config.aggregation == "normalized")
    for l in reversed(range(len(config.layer_dims))):
        dpre = dH * activate_grad(cache.pre[l], cache.H[l + 1], config.activation)
        W = params[f"mp.{l}.weight"]
        A = cache.A[l]
        has_bias = f"mp.{l}.bias" in params
        if W.shape[0] == 1:
            if has_bias:
                g[f"mp.{l}.bias"] = dpre.sum(axis=(0, 1))[None]
            g[f"mp.{l}.weight"] = np.einsum("bid,bie->de", A, dpre)[None]
            dA = dpre @ W[0].T
        else:
            if has_bias:
                g[f"mp.{l}.bias"] = dpre.sum(axis=0)
            g[f"mp.{l}.weight"] = np.einsum("bid,bie->ide", A, dpre)
            dA = np.einsum("bie,ide->bid", dpre, W)
        # A = adj @ H, so dH = adj^T @ dA
        dH = np.einsum("ij,bid->bjd", adj, dA)

    cat, num = _layout(graph)
    if num:
        dnum = dH[:, num, :]
        g["num.weight"] = np.einsum("bn,bnd->nd", X[:, num], dnum)
        if "num.bias" in params:
            g["num.bias"] = dnum.sum(axis=0)
    for i in cat:
        np.add.at(g[f"embed.{i}"], X[:, i].astype(np.intp), dH[:, i, :])
        if config.anchored:
            # the missing token stays pinned at zero
            g[f"embed.{i}"][0] = 0.0
    return value, g


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: ModelParams, grads, state: AdamState, config: TrainConfig) -> None:
    """In-place bias-corrected Adam update; increments ``state.t``."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        gk = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * gk
        v *= b2
        v += (1.0 - b2) * gk * gk
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


# -- loop -------------------------------------------------------------------

def validation_metric(mat: EncodedMatrix, params, graph, config: ModelConfig) -> float:
    z = forward(mat.X, params, graph, config).z
    if config.task == "regression":
        return mse(z, mat.y)
    return evaluate(link(z, config.task), mat.y, config.task).auc


def train(train_set: EncodedMatrix, val_set: EncodedMatrix, graph: FeatureGraph,
          model_config: ModelConfig, train_config: TrainConfig,
          n_tokens: dict[int, int], init: Optional[ModelParams] = None):
    """Minibatch Adam with early stopping on the validation metric.

    Returns the parameters of the best validation epoch and the history.
    Validation AUC is maximized for classification, MSE minimized for
    regression.
    """
    params = init.copy() if init is not None else init_params(
        graph, n_tokens, model_config, substream(model_config.seed, "init"))
    state = AdamState.for_params(params)
    shuffle_rng = substream(train_config.seed, "shuffle")
    minimize = model_config.task == "regression"
    history = TrainHistory(metric_name="mse" if minimize else "auc")
    best = None
    n = len(train_set)
    for epoch in range(train_config.max_epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            value, grads = backward(train_set.X[idx], train_set.y[idx], params, graph, model_config)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, step {state.t + 1}")
            adam_step(params, grads, state, train_config)
            total += value * idx.size
        metric = validation_metric(val_set, params, graph, model_config)
        history.records.append(EpochRecord(epoch, total / n, metric, time.time()))
        improved = best is None or (metric < history.best_metric if minimize else metric > history.best_metric)
        if improved:
            history.best_epoch, history.best_metric = epoch, metric
            best = params.copy()
        logger.debug("epoch %d loss %.6f val %.6f", epoch, total / n, metric)
        if epoch - history.best_epoch >= train_config.patience:
            break
    return best, history
