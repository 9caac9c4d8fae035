"""Per-instance attributions read straight off the model's readout."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import forward, link


@dataclass
class AttributionReport:
    """Scores ``s_i`` with ``bias + sum(scores) == logit``.

    For multiclass models ``scores``, ``bias`` and ``logit`` refer to
    ``predicted_class`` unless the report was built with ``all_classes``,
    in which case they carry one entry per class.
    """

    instance_id: object
    names: list
    values: list
    scores: np.ndarray
    bias: object
    logit: object
    prediction: object
    predicted_class: Optional[object] = None
    all_classes: bool = False

    def to_dict(self) -> dict:
        def plain(v):
            return np.asarray(v).tolist() if isinstance(v, np.ndarray) or np.ndim(v) else float(v)

        d = {
            "instance_id": self.instance_id,
            "prediction": plain(self.prediction),
            "bias": plain(self.bias),
            "logit": plain(self.logit),
            "features": [
                {"name": n, "value": v, "score": plain(s)}
                for n, v, s in zip(self.names, self.values, self.scores)
            ],
            "sorted": False,
        }
        if self.predicted_class is not None:
            d["predicted_class"] = self.predicted_class
        return d


def attribute(X, params, graph, config, instance_ids: Optional[Sequence] = None,
              decoded: Optional[Sequence[Sequence]] = None, class_labels: Optional[Sequence] = None,
              all_classes: bool = False) -> list[AttributionReport]:
    """Attribution reports for every row of the encoded matrix ``X``.

    ``decoded`` optionally supplies human-readable input values per row;
    otherwise the encoded values are reported.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cache = forward(X, params, graph, config)
    probs = link(cache.z, config.task)
    bias = np.asarray(params["out.bias"], dtype=np.float64)
    reports = []
    for r in range(X.shape[0]):
        rid = instance_ids[r] if instance_ids is not None else r
        values = list(decoded[r]) if decoded is not None else X[r].tolist()
        s, z, p = cache.s[r], cache.z[r], probs[r]
        cls = None
        if config.task == "multiclass":
            c = int(np.argmax(p))
            cls = class_labels[c] if class_labels is not None else c
            if not all_classes:
                s, z, b = s[:, c], z[c], float(bias[c])
            else:
                b = bias.copy()
            pred = p if all_classes else float(p[c])
        else:
            b = float(bias)
            pred = float(p)
            z = float(z)
            if config.task == "binary":
                cls = (class_labels[int(p > 0.5)] if class_labels is not None else int(p > 0.5))
        reports.append(AttributionReport(
            rid, list(graph.names), values, np.array(s, copy=True), b, z, pred, cls, all_classes,
        ))
    return reports


def top_k(report: AttributionReport, k: int = 10) -> list[int]:
    """Feature indices ordered by decreasing ``|score|``; ties keep index order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.asarray(report.scores)
    mag = np.abs(s) if s.ndim == 1 else np.abs(s).max(axis=1)
    order = sorted(range(len(mag)), key=lambda i: (-mag[i], i))
    return order[:k]


def write_reports_json(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1)


def write_top_k_csv(reports, k, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "rank", "feature", "value", "score", "bias", "prediction"])
        for rep in reports:
            for rank, i in enumerate(top_k(rep, k), start=1):
                score = rep.scores[i]
                w.writerow([rep.instance_id, rank, rep.names[i], rep.values[i],
                            repr(float(score)) if np.ndim(score) == 0 else json.dumps(np.asarray(score).tolist()),
                            rep.bias if np.ndim(rep.bias) == 0 else json.dumps(np.asarray(rep.bias).tolist()),
                            rep.prediction if np.ndim(rep.prediction) == 0 else json.dumps(np.asarray(rep.prediction).tolist())])
