"""Versioned single-file container for a fitted estimator.

Layout (little-endian)::

    b"IGNHM\\0" | u16 version | u32 header length | header JSON
    | u32 graph length | graph bytes | float64 tensors in manifest order | u32 CRC32

The header holds the schema, encoder state, model/train configuration,
estimator parameters, training metadata and the tensor manifest. JSON is
written with sorted keys and no timestamps so identical fits produce
identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .dataset import EncoderState, Schema
from .estimator import estimator_for
from .graph import (
    ChecksumError,
    FormatError,
    SchemaMismatchError,
    VersionError,
    graph_from_bytes,
    graph_to_bytes,
)
from .model import ModelConfig, ModelParams

MODEL_MAGIC = b"IGNHM\0"
MODEL_VERSION = 1
# runtime settings that must not change the file
_SKIP_PARAMS = ("graph", "schema", "threads")


def _train_meta(est) -> dict:
    if not hasattr(est, "history_"):
        return est.train_meta_
    h = est.history_
    return {
        "seed": est.seed,
        "config": est.train_config().to_dict(),
        "best_epoch": h.best_epoch,
        "best_val_metric": h.best_metric,
        "val_metric_name": h.metric_name,
        "epochs_run": len(h.records),
    }


def model_to_bytes(est) -> bytes:
    params = est.params_
    manifest = [[name, list(arr.shape)] for name, arr in params.items()]
    est_params = {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in est.get_params().items() if k not in _SKIP_PARAMS}
    header = {
        "schema": est.schema_.to_dict(),
        "schema_sha256": est.schema_.digest().hex(),
        "encoder": est.encoder_.to_dict(),
        "model_config": est.config_.to_dict(),
        "estimator": type(est).__name__,
        "estimator_params": est_params,
        "class_labels": list(est.classes_labels_) if est.classes_labels_ is not None else None,
        "classes": [c.item() if hasattr(c, "item") else c for c in est.classes_] if hasattr(est, "classes_") else None,
        "train": _train_meta(est),
        "tensors": manifest,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    graph = graph_to_bytes(est.graph_)
    out = bytearray(MODEL_MAGIC)
    out += struct.pack("<HI", MODEL_VERSION, len(head)) + head
    out += struct.pack("<I", len(graph)) + graph
    for name, _ in manifest:
        out += np.ascontiguousarray(params[name], dtype="<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def model_from_bytes(blob: bytes, schema: Schema | None = None):
    if len(blob) < 16:
        raise ChecksumError("model: file too short")
    body = blob[:-4]
    if zlib.crc32(body) != struct.unpack("<I", blob[-4:])[0]:
        raise ChecksumError("model: checksum mismatch (truncated or corrupted)")
    if body[:6] != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, head_len = struct.unpack_from("<HI", body, 6)
    if version != MODEL_VERSION:
        raise VersionError(f"model format version {version}, expected {MODEL_VERSION}")
    off = 12
    header = json.loads(body[off:off + head_len].decode("utf-8"))
    off += head_len
    (glen,) = struct.unpack_from("<I", body, off)
    off += 4
    model_schema = Schema.from_dict(header["schema"])
    if schema is not None and schema.digest() != model_schema.digest():
        raise SchemaMismatchError(
            f"model was trained on a different schema than the one with target {schema.target!r}"
        )
    graph = graph_from_bytes(body[off:off + glen], model_schema)
    off += glen
    params = ModelParams()
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).astype(np.float64)
        params[name] = arr.reshape(shape)
        off += 8 * count

    est_params = dict(header["estimator_params"])
    if isinstance(est_params.get("layer_dims"), list):
        est_params["layer_dims"] = tuple(est_params["layer_dims"])
    est = estimator_for(model_schema, **est_params)
    est.schema_ = model_schema
    est.feature_names_in_ = np.array(model_schema.names, dtype=object)
    est.n_features_in_ = len(model_schema.names)
    labels = header["class_labels"]
    est.classes_labels_ = tuple(labels) if labels is not None else None
    if header.get("classes") is not None:
        est.classes_ = np.array(header["classes"])
    est.encoder_ = EncoderState.from_dict(header["encoder"])
    est.graph_ = graph
    est.config_ = ModelConfig.from_dict(header["model_config"])
    est.params_ = params
    est.train_meta_ = header["train"]
    return est


def save_model(est, path) -> None:
    Path(path).write_bytes(model_to_bytes(est))


def load_model(path, schema: Schema | None = None):
    return model_from_bytes(Path(path).read_bytes(), schema)
