"""scikit-learn compatible estimators wrapping the full pipeline.

``fit`` tokenizes/standardizes the training rows, builds the feature graph
from them, oversamples the minority class (binary tasks), and trains with
early stopping on a validation set. Predictions come with exact per-feature
attributions through :meth:`explain`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import (
    CATEGORICAL,
    EncodedMatrix,
    RawTable,
    Schema,
    encode,
    fit_encoders,
    infer_class_labels,
    oversample_minority,
)
from .explain import attribute
from .graph import SchemaMismatchError, build_graph, set_self_loops
from .model import ModelConfig, forward, link
from .seeding import substream
from .train import TrainConfig, train
from .validation import _cell, as_raw_table, schema_from_columns, with_target


def _unique_labels(y) -> np.ndarray:
    y = np.asarray(y)
    return np.unique(y) if y.dtype != object else np.unique(y.astype(str))


class _IGNHBase(BaseEstimator):
    _task = None

    def __init__(self, categorical_features=None, alpha=0.05, self_loop=None, self_loop_frac=0.9,
                 embed_dim=16, layer_dims=(16,) * 6, activation="relu", weight_sharing="per_node",
                 aggregation="normalized", anchored=True, learning_rate=1e-3, max_epochs=100, patience=20,
                 batch_size=128, validation_fraction=0.2, oversample=True, graph=None,
                 schema=None, threads=1, seed=0):
        self.categorical_features = categorical_features
        self.alpha = alpha
        self.self_loop = self_loop
        self.self_loop_frac = self_loop_frac
        self.embed_dim = embed_dim
        self.layer_dims = layer_dims
        self.activation = activation
        self.weight_sharing = weight_sharing
        self.aggregation = aggregation
        self.anchored = anchored
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.oversample = oversample
        self.graph = graph
        self.schema = schema
        self.threads = threads
        self.seed = seed

    # -- helpers --------------------------------------------------------

    def _resolve_schema(self, table: RawTable, y) -> Schema:
        if self.schema is not None:
            return self.schema
        labels = None
        if self._task != "regression":
            labels = self._class_labels(y)
        return schema_from_columns(list(table.columns), self.categorical_features,
                                   self._task_for(labels), class_labels=labels)

    def _task_for(self, labels):
        return self._task

    def _class_labels(self, y):
        return None

    def _table(self, X) -> RawTable:
        names = self.feature_names_in_ if hasattr(self, "feature_names_in_") else None
        table = as_raw_table(X, names)
        if hasattr(self, "schema_"):
            missing = [n for n in self.schema_.names if n not in table.columns]
            if missing:
                raise SchemaMismatchError(f"input lacks columns {missing}")
        return table

    def _encode(self, X) -> EncodedMatrix:
        check_is_fitted(self, "params_")
        return encode(self._table(X), self.encoder_, self.schema_, self.classes_labels_)

    def model_config(self, n_classes=2) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim, layer_dims=tuple(self.layer_dims), activation=self.activation,
            weight_sharing=self.weight_sharing, aggregation=self.aggregation,
            anchored=self.anchored,
            task=self.schema_.task if hasattr(self, "schema_") else self._task,
            n_classes=n_classes, seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                           patience=self.patience, batch_size=self.batch_size, seed=self.seed)

    # -- fitting --------------------------------------------------------

    def fit(self, X, y=None, X_val=None, y_val=None):
        """Fit encoders, graph and network.

        ``y`` may be omitted when ``X`` is a RawTable that already contains
        the schema's target column. Without ``X_val`` a validation split of
        ``validation_fraction`` is carved from the training rows.
        """
        table = as_raw_table(X)
        if y is None:
            if self.schema is None:
                raise ValueError("y is required unless a schema with a target column is given")
            y = table.column(self.schema.target)
        schema = self._resolve_schema(table, y)
        table = with_target(table, schema, y)
        if X_val is None:
            n = table.n_rows
            perm = substream(self.seed, "split").permutation(n)
            n_val = max(1, int(np.floor(self.validation_fraction * n)))
            val_table, table = table.take(perm[:n_val]), table.take(perm[n_val:])
        else:
            vt = as_raw_table(X_val, schema.names)
            if y_val is None:
                y_val = vt.column(schema.target)
            val_table = with_target(vt, schema, y_val)
        return self._fit_tables(table, val_table, schema)

    def _fit_tables(self, train_table: RawTable, val_table: RawTable, schema: Schema):
        self.schema_ = schema
        self.feature_names_in_ = np.array(schema.names, dtype=object)
        self.n_features_in_ = len(schema.names)
        self.classes_labels_ = self._labels_from_schema(schema, train_table)
        self.encoder_ = fit_encoders(train_table, schema)
        enc_train = encode(train_table, self.encoder_, schema, self.classes_labels_)
        enc_val = encode(val_table, self.encoder_, schema, self.classes_labels_)
        if self.graph is not None:
            if self.graph.schema_hash != schema.digest():
                raise SchemaMismatchError(f"supplied graph was built for another schema than target {schema.target!r}")
            graph = self.graph
        else:
            graph = build_graph(enc_train, self.alpha, self.threads)
            if self.self_loop is not None:
                graph = set_self_loops(graph, weight=self.self_loop)
            else:
                graph = set_self_loops(graph, fraction=self.self_loop_frac)
        self.graph_ = graph
        if schema.task == "binary" and self.oversample:
            enc_train = oversample_minority(enc_train, substream(self.seed, "oversample"))
        n_tokens = {i: self.encoder_.n_tokens(f.name)
                    for i, f in enumerate(schema.features) if f.kind == CATEGORICAL}
        n_classes = len(self.classes_labels_) if self.classes_labels_ is not None else 2
        self.config_ = self.model_config(n_classes)
        self.params_, self.history_ = train(enc_train, enc_val, graph, self.config_,
                                            self.train_config(), n_tokens)
        return self

    def _labels_from_schema(self, schema, table):
        return None

    # -- inference ------------------------------------------------------

    def decision_function(self, X) -> np.ndarray:
        """Pre-link outputs (logits for classifiers)."""
        return forward(self._encode(X).X, self.params_, self.graph_, self.config_).z

    def decision_function_encoded(self, X) -> np.ndarray:
        """Pre-link outputs for rows that are already encoded."""
        check_is_fitted(self, "params_")
        return forward(np.atleast_2d(X), self.params_, self.graph_, self.config_).z

    def explain(self, X, all_classes=False, decode=True):
        """One :class:`~ignh.explain.AttributionReport` per row of ``X``."""
        enc = self._encode(X)
        decoded = None
        if decode:
            table = self._table(X)
            decoded = [[table.column(n)[r] for n in self.schema_.names] for r in range(len(enc))]
        return attribute(enc.X, self.params_, self.graph_, self.config_, decoded=decoded,
                         class_labels=self.classes_labels_, all_classes=all_classes)

    def baseline_row(self) -> np.ndarray:
        """Encoded reference row: training means (0) and the missing token (0)."""
        check_is_fitted(self, "params_")
        return np.zeros(self.n_features_in_)


class IGNHClassifier(ClassifierMixin, _IGNHBase):
    """Interpretable graph network classifier for mixed-type tabular data.

    Parameters
    ----------
    categorical_features : list of str or int, or bool mask, optional
        Columns tokenized as categories; everything else is standardized.
        Ignored when ``schema`` is given.
    alpha : float, default=0.05
        Significance level a correlation must reach to become an edge.
    self_loop : float, optional
        Explicit self-loop weight. Overrides ``self_loop_frac``.
    self_loop_frac : float, default=0.9
        Target share of the self-loop in a node's aggregated messages.
    embed_dim, layer_dims, activation, weight_sharing, aggregation, anchored
        Network shape; see :class:`ignh.model.ModelConfig`.
    learning_rate, max_epochs, patience, batch_size
        Adam and early-stopping settings.
    validation_fraction : float, default=0.2
        Share of ``X`` held out for early stopping when no ``X_val`` is passed.
    oversample : bool, default=True
        Balance binary training sets by random minority oversampling.
    graph : FeatureGraph, optional
        Prebuilt graph; skips correlation analysis.
    schema : Schema, optional
        Explicit feature typing (as used by the CLI).
    seed : int, default=0
        Root seed for all random substreams.
    """

    _task = "binary"

    def _class_labels(self, y):
        return tuple(_cell(v) for v in _unique_labels(y))

    def _task_for(self, labels):
        return "binary" if len(labels) == 2 else "multiclass"

    def _labels_from_schema(self, schema, table):
        labels = infer_class_labels(table, schema)
        if len(labels) < 2:
            raise ValueError("classification needs at least two classes")
        return labels

    def fit(self, X, y=None, X_val=None, y_val=None):
        super().fit(X, y, X_val, y_val)
        if y is not None and self.schema is None:
            self.classes_ = _unique_labels(y)
        else:
            self.classes_ = np.array(self.classes_labels_, dtype=object)
        return self

    def predict_proba(self, X) -> np.ndarray:
        p = link(self.decision_function(X), self.config_.task)
        if self.config_.task == "binary":
            return np.column_stack([1.0 - p, p])
        return p

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class IGNHRegressor(RegressorMixin, _IGNHBase):
    """Interpretable graph network regressor; see :class:`IGNHClassifier` for parameters."""

    _task = "regression"

    def _labels_from_schema(self, schema, table):
        return None

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X)


def estimator_for(schema: Schema, **params) -> _IGNHBase:
    cls = IGNHRegressor if schema.task == "regression" else IGNHClassifier
    return cls(schema=schema, **params)
