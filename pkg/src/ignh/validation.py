"""Input coercion shared by the estimators and the CLI."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .dataset import CATEGORICAL, NUMERICAL, Feature, RawTable, Schema, SchemaError


def _cell(v) -> Optional[str]:
    if v is None:
        return None
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return None
        return repr(float(v))
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return str(int(v))
    s = str(v)
    return None if s == "" else s


def as_raw_table(X, feature_names: Optional[Sequence[str]] = None) -> RawTable:
    """Coerce a DataFrame, 2-d array-like or :class:`RawTable` to a RawTable.

    Missing cells (``None``, ``NaN``, empty strings) become ``None``.
    Array input gets names ``x0..x{m-1}`` unless ``feature_names`` is given.
    """
    if isinstance(X, RawTable):
        return X
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):
        names = [str(c) for c in X.columns]
        cols = {n: [_cell(v) for v in X[c].tolist()] for n, c in zip(names, X.columns)}
        return RawTable(cols)
    arr = np.asarray(X, dtype=object)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected 2-d input, got shape {arr.shape}")
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(arr.shape[1])]
    if len(names) != arr.shape[1]:
        raise ValueError(f"X has {arr.shape[1]} columns, expected {len(names)}")
    return RawTable({n: [_cell(v) for v in arr[:, j]] for j, n in enumerate(names)})


def schema_from_columns(names: Sequence[str], categorical, task: str, target: str = "target",
                        class_labels=None) -> Schema:
    """Build a schema from column names and a categorical selector.

    ``categorical`` is a list of column names, integer positions, or a
    boolean mask; ``None`` means all numerical.
    """
    names = list(names)
    if categorical is None:
        cat = set()
    else:
        sel = list(categorical)
        if sel and all(isinstance(c, (bool, np.bool_)) for c in sel):
            if len(sel) != len(names):
                raise ValueError("boolean categorical mask has the wrong length")
            cat = {n for n, flag in zip(names, sel) if flag}
        else:
            cat = set()
            for c in sel:
                if isinstance(c, (int, np.integer)):
                    cat.add(names[int(c)])
                elif c in names:
                    cat.add(c)
                else:
                    raise SchemaError(f"categorical feature {c!r} is not a column")
    while target in names:
        target = "_" + target
    feats = tuple(Feature(n, CATEGORICAL if n in cat else NUMERICAL) for n in names)
    return Schema(feats, target, task, tuple(class_labels) if class_labels is not None else None)


def with_target(table: RawTable, schema: Schema, y) -> RawTable:
    y = list(np.asarray(y, dtype=object).ravel())
    if len(y) != table.n_rows:
        raise ValueError(f"X has {table.n_rows} rows but y has {len(y)}")
    cols = {n: table.column(n) for n in schema.names}
    cols[schema.target] = [_cell(v) for v in y]
    return RawTable(cols)
