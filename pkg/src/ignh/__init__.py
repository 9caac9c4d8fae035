"""Interpretable graph networks for heterogeneous tabular data."""

from .dataset import Feature, RawTable, Schema, SchemaError, load_csv, load_schema
from .estimator import IGNHClassifier, IGNHRegressor, estimator_for
from .explain import AttributionReport, top_k
from .graph import FeatureGraph, build_graph, load_graph, save_graph, set_self_loops
from .model import ModelConfig
from .modelfile import load_model, save_model
from .shapval import convergence_trace, exact_shapley, kernel_shap
from .train import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AttributionReport", "Feature", "FeatureGraph", "IGNHClassifier", "IGNHRegressor",
    "ModelConfig", "RawTable", "Schema", "SchemaError", "TrainConfig", "build_graph",
    "convergence_trace", "estimator_for", "exact_shapley", "kernel_shap", "load_csv",
    "load_graph", "load_model", "load_schema", "save_graph", "save_model", "set_self_loops",
    "top_k",
]
