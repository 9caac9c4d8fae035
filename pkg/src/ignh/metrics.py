"""Threshold-free evaluation: Mann-Whitney AUC and support-weighted one-vs-rest AUC."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class EvalResult:
    auc: float
    n_pos: Optional[int] = None
    n_neg: Optional[int] = None
    per_class_auc: list = field(default_factory=list)
    support: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"auc": self.auc}
        if self.n_pos is not None:
            d.update(n_pos=self.n_pos, n_neg=self.n_neg)
        if self.per_class_auc:
            d.update(per_class_auc=self.per_class_auc, support=self.support)
        return d


def auc_pair_count(scores, labels) -> tuple[int, int, int]:
    """Return ``(2U, n_pos, n_neg)``; ``2U`` counts wins twice and ties once.

    Sorting groups equal scores together, so each tie group contributes its
    positives times the negatives strictly below it, plus half its internal
    positive/negative pairs. All arithmetic is in integers.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(scores.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    s, p = scores[order], pos[order].astype(np.int64)
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    pos_g = np.add.reduceat(p, starts)
    size_g = np.diff(np.r_[starts, s.size])
    neg_g = size_g - pos_g
    neg_below = np.cumsum(neg_g) - neg_g
    twice_u = int((2 * pos_g * neg_below + pos_g * neg_g).sum())
    return twice_u, n_pos, n_neg


def auc_binary(scores, labels) -> float:
    twice_u, n_pos, n_neg = auc_pair_count(scores, labels)
    return twice_u / (2 * n_pos * n_neg)


def auc_weighted_ovr(probabilities, labels) -> EvalResult:
    """Per-class one-vs-rest AUC, averaged with class-support weights."""
    P = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    if P.ndim != 2 or P.shape[1] < 2:
        raise ValueError("probabilities must be an n x k matrix with k >= 2")
    k = P.shape[1]
    support = np.bincount(labels.astype(np.int64), minlength=k)
    if (support == 0).any():
        missing = np.flatnonzero(support == 0).tolist()
        raise ValueError(f"classes {missing} absent from labels")
    per_class = [auc_binary(P[:, c], (labels == c).astype(int)) for c in range(k)]
    auc = float(np.dot(support, per_class) / support.sum())
    return EvalResult(auc=auc, per_class_auc=per_class, support=support.tolist())


def evaluate(predictions, labels, task: str) -> EvalResult:
    if task == "binary":
        twice_u, n_pos, n_neg = auc_pair_count(predictions, labels)
        return EvalResult(auc=twice_u / (2 * n_pos * n_neg), n_pos=n_pos, n_neg=n_neg)
    if task == "multiclass":
        return auc_weighted_ovr(predictions, labels)
    raise ValueError("AUC is defined for classification tasks only")


def mse(predictions, targets) -> float:
    d = np.asarray(predictions, dtype=np.float64) - np.asarray(targets, dtype=np.float64)
    return float(np.mean(d * d))
