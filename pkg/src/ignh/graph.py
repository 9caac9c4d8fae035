"""The shared feature graph: significance-gated correlation edges plus self-loops.

The graph is built once from the training matrix and reused unchanged for
every instance at training and inference time; only node *values* differ
between instances.
"""

from __future__ import annotations

import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from .assoc import Assoc, cat_num_association, kendall_tau, pearson
from .dataset import CATEGORICAL, NUMERICAL, EncodedMatrix, Schema

GRAPH_MAGIC = b"IGNHG\0"
GRAPH_VERSION = 1
_KIND_CODES = {"pearson": 0, "point_biserial": 1, "kendall": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_NODE_KINDS = {NUMERICAL: 0, CATEGORICAL: 1}


class FormatError(ValueError):
    """A persisted graph or model file could not be read."""


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


class SchemaMismatchError(FormatError):
    pass


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    weight: float
    kind: str
    p_value: float = 0.0


@dataclass(frozen=True)
class FeatureGraph:
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    edges: tuple[Edge, ...]
    self_loop: np.ndarray
    alpha: float
    schema_hash: bytes = b"\0" * 32
    _adj: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = len(self.names)
        seen = set()
        for e in self.edges:
            if not 0 <= e.i < e.j < m:
                raise ValueError(f"edge ({e.i}, {e.j}) must satisfy 0 <= i < j < {m}")
            if (e.i, e.j) in seen:
                raise ValueError(f"duplicate edge ({e.i}, {e.j})")
            if not -1.0 <= e.weight <= 1.0:
                raise ValueError(f"edge weight {e.weight} outside [-1, 1]")
            seen.add((e.i, e.j))
        loops = np.asarray(self.self_loop, dtype=np.float64)
        if loops.shape != (m,) or not (loops > 0).all():
            raise ValueError("self_loop needs one positive weight per node")
        loops.setflags(write=False)
        object.__setattr__(self, "self_loop", loops)

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    def adjacency(self, normalized: bool = False) -> np.ndarray:
        """Dense weight matrix with self-loops on the diagonal (read-only).

        With ``normalized`` each row is divided by its absolute sum
        ``w_ii + sum_u |w_iu|``, so the self-loop's share of a node's
        aggregate is ``w_ii`` over that sum.
        """
        if self._adj is None:
            a = np.diag(self.self_loop).astype(np.float64)
            for e in self.edges:
                a[e.i, e.j] = a[e.j, e.i] = e.weight
            a.setflags(write=False)
            rows = a / np.abs(a).sum(axis=1, keepdims=True)
            rows.setflags(write=False)
            object.__setattr__(self, "_adj", (a, rows))
        return self._adj[1] if normalized else self._adj[0]

    def self_loop_share(self) -> np.ndarray:
        """Per-node fraction of absolute aggregation weight carried by the self-loop."""
        return np.diag(self.adjacency(normalized=True)).copy()

    def neighbors(self, i: int) -> list[int]:
        out = [e.j for e in self.edges if e.i == i] + [e.i for e in self.edges if e.j == i]
        return sorted(out)

    def kind_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in _KIND_CODES}
        for e in self.edges:
            counts[e.kind] += 1
        return counts

    def __eq__(self, other):
        if not isinstance(other, FeatureGraph):
            return NotImplemented
        return (
            self.names == other.names
            and self.kinds == other.kinds
            and self.edges == other.edges
            and np.array_equal(self.self_loop, other.self_loop)
            and self.alpha == other.alpha
            and self.schema_hash == other.schema_hash
        )

    __hash__ = None


def _with_nan(mat: EncodedMatrix) -> np.ndarray:
    X = mat.X.astype(np.float64, copy=True)
    X[mat.missing] = np.nan
    # categorical token 0 also covers unseen categories; treat as missing
    cat = mat.schema.categorical_mask
    X[:, cat] = np.where(X[:, cat] == 0, np.nan, X[:, cat])
    return X


def pair_association(X: np.ndarray, kinds, i: int, j: int, alpha: float) -> Optional[Assoc]:
    """Association between columns ``i`` and ``j`` of a NaN-marked matrix."""
    ki, kj = kinds[i], kinds[j]
    try:
        if ki == NUMERICAL and kj == NUMERICAL:
            return pearson(X[:, i], X[:, j])
        if ki == CATEGORICAL and kj == CATEGORICAL:
            return kendall_tau(X[:, i], X[:, j])
        cat, num = (i, j) if ki == CATEGORICAL else (j, i)
        return cat_num_association(X[:, cat], X[:, num], alpha)
    except ValueError:
        # too few complete pairs: undefined, no edge
        return None


def association_table(train: EncodedMatrix, alpha: float = 0.05, threads: int = 1):
    """All unordered feature pairs with their association (``None`` if undefined)."""
    X = _with_nan(train)
    kinds = train.schema.kinds
    pairs = list(combinations(range(X.shape[1]), 2))

    def work(p):
        return pair_association(X, kinds, p[0], p[1], alpha)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    return list(zip(pairs, results))


def build_graph(train: EncodedMatrix, alpha: float = 0.05, threads: int = 1) -> FeatureGraph:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    schema = train.schema
    edges = [
        Edge(i, j, a.r, a.kind, a.p_value)
        for (i, j), a in association_table(train, alpha, threads)
        if a is not None and a.p_value < alpha
    ]
    return FeatureGraph(
        names=tuple(schema.names),
        kinds=tuple(schema.kinds),
        edges=tuple(edges),
        self_loop=np.ones(len(schema.features)),
        alpha=float(alpha),
        schema_hash=schema.digest(),
    )


def set_self_loops(g: FeatureGraph, weight: Optional[float] = None, fraction: Optional[float] = None) -> FeatureGraph:
    """Assign one global self-loop weight.

    Exactly one of ``weight`` (explicit value) or ``fraction`` must be given.
    With ``fraction=rho`` the weight is ``rho / (1 - rho)`` times the mean,
    over nodes, of the summed absolute incident edge weight, so the loop
    carries share ``rho`` of an average node's aggregated weight. An
    edgeless graph falls back to weight 1.
    """
    if (weight is None) == (fraction is None):
        raise ValueError("give exactly one of weight or fraction")
    if weight is not None:
        if not weight > 0:
            raise ValueError(f"self-loop weight must be positive, got {weight}")
        w = float(weight)
    else:
        if not 0.0 < fraction < 1.0:
            raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
        incident = np.zeros(g.n_nodes)
        for e in g.edges:
            incident[e.i] += abs(e.weight)
            incident[e.j] += abs(e.weight)
        s = float(incident.mean())
        w = fraction / (1.0 - fraction) * s if s > 0 else 1.0
    return replace(g, self_loop=np.full(g.n_nodes, w), _adj=None)


# -- persistence ------------------------------------------------------------

def graph_to_bytes(g: FeatureGraph) -> bytes:
    out = bytearray()
    out += GRAPH_MAGIC
    out += struct.pack("<H", GRAPH_VERSION)
    out += g.schema_hash
    out += struct.pack("<dI", g.alpha, g.n_nodes)
    for name, kind in zip(g.names, g.kinds):
        raw = name.encode("utf-8")
        out += struct.pack("<BH", _NODE_KINDS[kind], len(raw)) + raw
    out += np.asarray(g.self_loop, dtype="<f8").tobytes()
    out += struct.pack("<I", len(g.edges))
    for e in g.edges:
        out += struct.pack("<IIBdd", e.i, e.j, _KIND_CODES[e.kind], e.weight, e.p_value)
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def _check_crc(blob: bytes, what: str) -> bytes:
    if len(blob) < 4:
        raise ChecksumError(f"{what}: file too short")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError(f"{what}: checksum mismatch (truncated or corrupted)")
    return body


def graph_from_bytes(blob: bytes, schema: Optional[Schema] = None) -> FeatureGraph:
    body = _check_crc(blob, "graph")
    if body[:6] != GRAPH_MAGIC:
        raise FormatError("not a feature-graph file (bad magic)")
    (version,) = struct.unpack_from("<H", body, 6)
    if version != GRAPH_VERSION:
        raise VersionError(f"graph format version {version}, expected {GRAPH_VERSION}")
    off = 8
    schema_hash = body[off:off + 32]
    off += 32
    alpha, m = struct.unpack_from("<dI", body, off)
    off += 12
    names, kinds = [], []
    rev = {v: k for k, v in _NODE_KINDS.items()}
    for _ in range(m):
        code, length = struct.unpack_from("<BH", body, off)
        off += 3
        names.append(body[off:off + length].decode("utf-8"))
        kinds.append(rev[code])
        off += length
    loops = np.frombuffer(body, dtype="<f8", count=m, offset=off).astype(np.float64)
    off += 8 * m
    (n_edges,) = struct.unpack_from("<I", body, off)
    off += 4
    edges = []
    for _ in range(n_edges):
        i, j, code, w, p = struct.unpack_from("<IIBdd", body, off)
        off += struct.calcsize("<IIBdd")
        edges.append(Edge(i, j, w, _KIND_NAMES[code], p))
    if schema is not None and schema.digest() != schema_hash:
        raise SchemaMismatchError(
            f"graph was built for a different schema than the one with target "
            f"{schema.target!r} and features {schema.names} (hash {schema.digest().hex()[:12]})"
        )
    return FeatureGraph(tuple(names), tuple(kinds), tuple(edges), loops, alpha, schema_hash)


def save_graph(g: FeatureGraph, path) -> None:
    Path(path).write_bytes(graph_to_bytes(g))


def load_graph(path, schema: Optional[Schema] = None) -> FeatureGraph:
    return graph_from_bytes(Path(path).read_bytes(), schema)
