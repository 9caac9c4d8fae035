"""CSV ingestion, typed schemas, categorical tokenization and z-scoring."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
TASKS = ("binary", "multiclass", "regression")


class SchemaError(ValueError):
    """Raised when data and schema disagree."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    features: tuple[Feature, ...]
    target: str
    task: str
    class_labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if self.target in names:
            raise SchemaError(f"target {self.target!r} is listed as a feature")
        if self.task not in TASKS:
            raise SchemaError(f"unknown task {self.task!r}")
        if not self.features:
            raise SchemaError("schema has no features")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def kinds(self) -> list[str]:
        return [f.kind for f in self.features]

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([f.kind == CATEGORICAL for f in self.features])

    def to_dict(self) -> dict:
        d = {
            "features": [{"name": f.name, "kind": f.kind} for f in self.features],
            "target": self.target,
            "task": self.task,
        }
        if self.class_labels is not None:
            d["class_labels"] = list(self.class_labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            feats = tuple(Feature(f["name"], f["kind"]) for f in d["features"])
            labels = d.get("class_labels")
            return cls(
                features=feats,
                target=d["target"],
                task=d["task"],
                class_labels=tuple(str(v) for v in labels) if labels is not None else None,
            )
        except KeyError as exc:
            raise SchemaError(f"schema document lacks key {exc}") from None

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form; used to chain schema, graph and model."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).digest()


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


@dataclass
class RawTable:
    """String-valued columns; ``None`` marks a missing cell."""

    columns: dict[str, list[Optional[str]]]

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __len__(self):
        return self.n_rows

    def missing_counts(self) -> dict[str, int]:
        return {k: sum(v is None for v in col) for k, col in self.columns.items()}

    def take(self, indices) -> "RawTable":
        idx = [int(i) for i in indices]
        return RawTable({k: [col[i] for i in idx] for k, col in self.columns.items()})

    def column(self, name: str) -> list[Optional[str]]:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"missing column {name!r}") from None


def load_csv(path, schema: Schema, require_target: bool = True) -> RawTable:
    """Read a headed UTF-8 CSV into a :class:`RawTable`.

    Empty cells become missing. Numeric cells are checked for parseability so
    errors surface with their row and column rather than deep in training.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        wanted = schema.names + ([schema.target] if require_target else [])
        if not require_target and schema.target in header:
            wanted.append(schema.target)
        for name in wanted:
            if name not in header:
                raise SchemaError(f"{path}: missing column {name!r}")
        pos = {name: header.index(name) for name in wanted}
        cols: dict[str, list[Optional[str]]] = {name: [] for name in wanted}
        numeric = {f.name for f in schema.features if f.kind == NUMERICAL}
        if schema.task == "regression":
            numeric.add(schema.target)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            for name, j in pos.items():
                cell = row[j].strip() if j < len(row) else ""
                if cell == "":
                    cols[name].append(None)
                    continue
                if name in numeric:
                    try:
                        float(cell)
                    except ValueError:
                        raise SchemaError(
                            f"{path}: row {lineno}, column {name!r}: unparseable number {cell!r}"
                        ) from None
                cols[name].append(cell)
    return RawTable(cols)


@dataclass
class EncoderState:
    """Fitted per-feature encoders.

    ``means``/``stds`` are keyed by numerical feature name, ``tokens`` by
    categorical feature name (category -> 1..K; 0 is reserved for missing).
    """

    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    tokens: dict[str, dict[str, int]] = field(default_factory=dict)

    def is_constant(self, name: str) -> bool:
        return self.stds[name] == 0.0

    def n_tokens(self, name: str) -> int:
        return len(self.tokens[name])

    def decode(self, name: str, value: float):
        if name in self.tokens:
            tok = int(value)
            if tok == 0:
                return None
            for cat, t in self.tokens[name].items():
                if t == tok:
                    return cat
            return None
        std = self.stds[name]
        return self.means[name] + value * std if std > 0 else self.means[name]

    def to_dict(self) -> dict:
        return {"means": self.means, "stds": self.stds, "tokens": self.tokens}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderState":
        return cls(dict(d["means"]), dict(d["stds"]), {k: dict(v) for k, v in d["tokens"].items()})


@dataclass(frozen=True)
class EncodedMatrix:
    """Encoded design matrix.

    ``X`` holds z-scores in numerical columns and integer tokens (as floats)
    in categorical columns. ``missing`` flags cells that were absent in the
    source, which the association statistics exclude pairwise.
    """

    X: np.ndarray
    y: Optional[np.ndarray]
    missing: np.ndarray
    schema: Schema

    def __len__(self):
        return self.X.shape[0]

    def take(self, indices) -> "EncodedMatrix":
        idx = np.asarray(indices, dtype=np.intp)
        return EncodedMatrix(
            self.X[idx], None if self.y is None else self.y[idx], self.missing[idx], self.schema
        )


def fit_encoders(train: RawTable, schema: Schema) -> EncoderState:
    if train.n_rows == 0:
        raise ValueError("cannot fit encoders on an empty table")
    state = EncoderState()
    for feat in schema.features:
        col = train.column(feat.name)
        if feat.kind == CATEGORICAL:
            tokens: dict[str, int] = {}
            for cell in col:
                if cell is not None and cell not in tokens:
                    tokens[cell] = len(tokens) + 1
            state.tokens[feat.name] = tokens
        else:
            vals = np.array([float(c) for c in col if c is not None], dtype=np.float64)
            if vals.size == 0:
                state.means[feat.name], state.stds[feat.name] = 0.0, 0.0
                continue
            mean = float(vals.mean())
            std = float(np.sqrt(np.mean((vals - mean) ** 2)))
            state.means[feat.name] = mean
            # exact zero keeps the constant flag unambiguous
            state.stds[feat.name] = std if std > 0 and math.isfinite(std) else 0.0
    return state


def encode_labels(values: Sequence, schema: Schema, class_labels: Sequence[str]) -> np.ndarray:
    if schema.task == "regression":
        if any(v is None for v in values):
            raise SchemaError(f"target {schema.target!r} has missing values")
        return np.array([float(v) for v in values], dtype=np.float64)
    index = {str(c): i for i, c in enumerate(class_labels)}
    out = np.empty(len(values), dtype=np.int64)
    for r, v in enumerate(values):
        try:
            out[r] = index[str(v)]
        except KeyError:
            raise SchemaError(f"row {r}: label {v!r} not among class labels {list(class_labels)}") from None
    return out


def infer_class_labels(table: RawTable, schema: Schema) -> tuple[str, ...]:
    if schema.class_labels is not None:
        return schema.class_labels
    seen = sorted({v for v in table.column(schema.target) if v is not None})
    return tuple(seen)


def encode(table: RawTable, state: EncoderState, schema: Schema, class_labels=None) -> EncodedMatrix:
    n, m = table.n_rows, len(schema.features)
    X = np.zeros((n, m), dtype=np.float64)
    missing = np.zeros((n, m), dtype=bool)
    for j, feat in enumerate(schema.features):
        col = table.column(feat.name)
        if feat.kind == CATEGORICAL:
            tokens = state.tokens[feat.name]
            for r, cell in enumerate(col):
                if cell is None:
                    missing[r, j] = True
                else:
                    # unseen categories share the reserved missing token
                    X[r, j] = tokens.get(cell, 0)
        else:
            mean, std = state.means[feat.name], state.stds[feat.name]
            for r, cell in enumerate(col):
                if cell is None:
                    missing[r, j] = True
                elif std > 0:
                    X[r, j] = (float(cell) - mean) / std
    y = None
    if schema.target in table.columns:
        labels = class_labels if class_labels is not None else schema.class_labels
        if schema.task != "regression" and labels is None:
            raise SchemaError("class labels unknown; pass class_labels")
        y = encode_labels(table.column(schema.target), schema, labels)
    return EncodedMatrix(X, y, missing, schema)


def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)}, expected 1")
    n_train = int(math.floor(fractions[0] * n))
    n_val = int(math.floor(fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) == 0:
        raise ValueError(f"{n} rows are too few for split {tuple(fractions)}")
    return n_train, n_val, n_test


def split(table, fractions=(0.8, 0.1, 0.1), seed=0):
    """Shuffle rows with ``seed`` and cut into train/validation/test.

    Sizes are ``floor(f_train * n)``, ``floor(f_val * n)`` and the remainder.
    Works for anything with ``len`` and ``take``.
    """
    n = len(table)
    n_train, n_val, _ = split_sizes(n, fractions)
    perm = np.random.default_rng(seed).permutation(n)
    return (
        table.take(perm[:n_train]),
        table.take(perm[n_train:n_train + n_val]),
        table.take(perm[n_train + n_val:]),
    )


def oversample_minority(train: EncodedMatrix, seed=0) -> EncodedMatrix:
    """Duplicate random minority-class rows until both classes have equal counts.

    Multiclass and regression matrices are returned unchanged. The original
    rows keep their order; duplicates are appended.
    """
    if train.schema.task != "binary":
        return train
    counts = np.bincount(train.y, minlength=2)
    if (counts == 0).any():
        raise ValueError("oversampling needs both classes in the training set")
    minority = int(np.argmin(counts))
    deficit = int(counts.max() - counts.min())
    if deficit == 0:
        return train
    pool = np.flatnonzero(train.y == minority)
    extra = np.random.default_rng(seed).choice(pool, size=deficit, replace=True)
    return train.take(np.concatenate([np.arange(len(train)), extra]))
