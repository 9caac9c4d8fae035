"""Forward pass of the interpretable graph network.

Each feature is one node. Inputs are embedded (lookup table for categorical
tokens, linear projection for numerical values), refined by rounds of
message passing over the fixed feature graph, and finally each node is read
out to a scalar score. The pre-link output is the bias plus the sum of the
node scores, so every prediction carries its own exact attribution.

By default the network is *anchored*: projections and message-passing maps
carry no bias and the missing-token embedding is pinned to zero. The
reference row (every numerical value at its training mean, every category
missing) then embeds to all-zero node states, every score vanishes there and
``out.bias`` is exactly the model's output at the reference.

Tensors are batched: node states have shape ``(batch, n_nodes, width)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import CATEGORICAL
from .graph import FeatureGraph

ACTIVATIONS = ("relu", "tanh")
AGGREGATIONS = ("normalized", "raw")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 16
    layer_dims: tuple[int, ...] = (16,) * 6
    activation: str = "relu"
    weight_sharing: str = "per_node"
    aggregation: str = "normalized"
    anchored: bool = True
    task: str = "binary"
    n_classes: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 1:
            raise ValueError("need at least one message-passing layer")
        if self.embed_dim < 1 or min(self.layer_dims) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.weight_sharing not in ("per_node", "shared"):
            raise ValueError("weight_sharing must be 'per_node' or 'shared'")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.task not in ("binary", "multiclass", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "multiclass" and self.n_classes < 2:
            raise ValueError("multiclass needs n_classes >= 2")

    @property
    def n_outputs(self) -> int:
        return self.n_classes if self.task == "multiclass" else 1

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "layer_dims": list(self.layer_dims),
            "activation": self.activation,
            "weight_sharing": self.weight_sharing,
            "aggregation": self.aggregation,
            "anchored": self.anchored,
            "task": self.task,
            "n_classes": self.n_classes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "layer_dims": tuple(d["layer_dims"])})


class ModelParams(dict):
    """Named parameter arrays.

    Keys: ``embed.<node>`` (categorical tables, row 0 = missing token),
    ``num.weight`` (numerical projections, one row per numerical node),
    ``mp.<l>.weight`` (per node, or a single shared slice),
    ``readout.weight``, ``out.weight`` and ``out.bias``. Unanchored models
    add ``num.bias`` and ``mp.<l>.bias``.
    """

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.items()})

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self if k.startswith("mp.") and k.endswith(".weight"))

    def zeros_like(self) -> "ModelParams":
        return ModelParams({k: np.zeros_like(v) for k, v in self.items()})

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.values())


def _layout(graph: FeatureGraph):
    cat = [i for i, k in enumerate(graph.kinds) if k == CATEGORICAL]
    num = [i for i, k in enumerate(graph.kinds) if k != CATEGORICAL]
    return cat, num


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(graph: FeatureGraph, n_tokens: dict[int, int], config: ModelConfig,
                rng: Optional[np.random.Generator] = None) -> ModelParams:
    """Draw initial parameters.

    ``n_tokens`` maps each categorical node index to its category count K;
    its table gets K + 1 rows. ``rng`` defaults to one seeded by
    ``config.seed``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    m = graph.n_nodes
    cat, num = _layout(graph)
    d0 = config.embed_dim
    p = ModelParams()
    for i in cat:
        p[f"embed.{i}"] = rng.uniform(-0.05, 0.05, size=(n_tokens[i] + 1, d0))
        if config.anchored:
            p[f"embed.{i}"][0] = 0.0
    p["num.weight"] = _glorot(rng, 1, d0, (len(num), d0))
    if not config.anchored:
        p["num.bias"] = np.zeros((len(num), d0))
    slices = m if config.weight_sharing == "per_node" else 1
    d_in = d0
    for l, d_out in enumerate(config.layer_dims):
        p[f"mp.{l}.weight"] = _glorot(rng, d_in, d_out, (slices, d_in, d_out))
        if not config.anchored:
            p[f"mp.{l}.bias"] = np.zeros((slices, d_out))
        d_in = d_out
    p["readout.weight"] = _glorot(rng, d_in, 1, (m, d_in))
    k = config.n_outputs
    if config.task == "multiclass":
        p["out.weight"] = _glorot(rng, 1, k, (m, k))
        p["out.bias"] = np.zeros(k)
    else:
        p["out.weight"] = _glorot(rng, 1, 1, (m,))
        p["out.bias"] = np.zeros(())
    return p


def activate(x, name):
    if name == "relu":
        return np.maximum(x, 0.0)
    return np.tanh(x)


def activate_grad(pre, post, name):
    if name == "relu":
        return (pre > 0).astype(pre.dtype)
    return 1.0 - post * post


def embed_inputs(X, params: ModelParams, graph: FeatureGraph) -> np.ndarray:
    """Initial node states ``H0`` of shape ``(batch, n_nodes, embed_dim)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cat, num = _layout(graph)
    d0 = params["num.weight"].shape[1] if num else params[f"embed.{cat[0]}"].shape[1]
    H = np.empty((X.shape[0], graph.n_nodes, d0))
    if num:
        H[:, num, :] = X[:, num, None] * params["num.weight"]
        if "num.bias" in params:
            H[:, num, :] += params["num.bias"]
    for i in cat:
        table = params[f"embed.{i}"]
        tokens = X[:, i].astype(np.intp)
        if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= table.shape[0]:
            raise IndexError(
                f"feature {graph.names[i]!r}: token outside 0..{table.shape[0] - 1}"
            )
        H[:, i, :] = table[tokens]
    return H


def message_pass(H, graph: FeatureGraph, params: ModelParams, layer: int,
                 activation="relu", aggregation="normalized"):
    """One aggregation round; returns ``(H_next, aggregated, pre_activation)``.

    ``aggregated[b, i] = w_ii * H[b, i] + sum_u w_iu * H[b, u]`` and the node's
    own linear map (or the shared one, plus a bias when the model has one)
    is applied before the activation.
    With ``aggregation="normalized"`` the weights of node ``i`` are first
    divided by ``w_ii + sum_u |w_iu|``.
    """
    A = np.einsum("ij,bjd->bid", graph.adjacency(aggregation == "normalized"), H)
    W = params[f"mp.{layer}.weight"]
    if W.shape[0] == 1:
        pre = A @ W[0]
    else:
        pre = np.einsum("bid,ide->bie", A, W)
    bias = params.get(f"mp.{layer}.bias")
    if bias is not None:
        pre += bias[0] if W.shape[0] == 1 else bias
    return activate(pre, activation), A, pre


def readout(H, params: ModelParams):
    """Per-node scores ``s`` and pre-link output ``z = b + sum_i s_i``."""
    r = np.einsum("bid,id->bi", H, params["readout.weight"])
    w = params["out.weight"]
    if w.ndim == 2:
        s = r[:, :, None] * w
    else:
        s = r * w
    z = params["out.bias"] + s.sum(axis=1)
    return s, z


@dataclass
class ForwardCache:
    H: list = field(default_factory=list)
    A: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    r: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None


def forward(X, params: ModelParams, graph: FeatureGraph, config: ModelConfig) -> ForwardCache:
    cache = ForwardCache()
    H = embed_inputs(X, params, graph)
    cache.H.append(H)
    for l in range(len(config.layer_dims)):
        H, A, pre = message_pass(H, graph, params, l, config.activation, config.aggregation)
        cache.A.append(A)
        cache.pre.append(pre)
        cache.H.append(H)
    cache.r = np.einsum("bid,id->bi", H, params["readout.weight"])
    cache.s, cache.z = readout(H, params)
    return cache


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def link(z, task: str):
    if task == "binary":
        return sigmoid(z)
    if task == "multiclass":
        return softmax(z)
    return np.asarray(z, dtype=np.float64)


def decision_function(X, params, graph, config) -> np.ndarray:
    return forward(X, params, graph, config).z


def predict(X, params, graph, config) -> np.ndarray:
    """Probabilities (binary: P(class 1); multiclass: rows of k) or regression values."""
    return link(decision_function(X, params, graph, config), config.task)
