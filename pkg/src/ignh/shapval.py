"""Shapley-value harness: exact enumeration, KernelSHAP and similarity traces.

A coalition ``S`` is evaluated by keeping the features in ``S`` from the
explained row and replacing the rest with a single baseline row. All value
functions here are plain callables mapping an ``(n, m)`` batch of encoded
rows to ``n`` real outputs (the model's pre-link output).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

MAX_EXACT_FEATURES = 20
_CHUNK = 1 << 14


class Underdetermined(ValueError):
    """The sampled coalitions do not pin down every attribution."""


def _all_masks(m: int) -> np.ndarray:
    codes = np.arange(1 << m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def _evaluate(f, row, baseline, masks) -> np.ndarray:
    out = np.empty(masks.shape[0])
    for start in range(0, masks.shape[0], _CHUNK):
        mk = masks[start:start + _CHUNK]
        out[start:start + mk.shape[0]] = np.asarray(f(np.where(mk, row, baseline)), dtype=np.float64).ravel()
    return out


def shapley_kernel(m: int, s) -> np.ndarray:
    """Kernel weight ``(m-1) / (C(m, s) * s * (m - s))`` of a size-``s`` coalition."""
    s = np.asarray(s)
    comb = np.array([math.comb(m, int(k)) for k in np.ravel(s)], dtype=np.float64).reshape(s.shape)
    return (m - 1) / (comb * s * (m - s))


def exact_shapley(f: Callable, row, baseline) -> np.ndarray:
    """Shapley values by enumerating all ``2^m`` coalitions."""
    row = np.asarray(row, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    m = row.size
    if m > MAX_EXACT_FEATURES:
        raise ValueError(f"exact Shapley enumeration limited to {MAX_EXACT_FEATURES} features, got {m}")
    v = _evaluate(f, row, baseline, _all_masks(m))
    codes = np.arange(1 << m, dtype=np.int64)
    size = np.zeros(1 << m, dtype=np.int64)
    for i in range(m):
        size += (codes >> i) & 1
    fact = [math.factorial(k) for k in range(m + 1)]
    weight = np.array([fact[s] * fact[m - s - 1] / fact[m] if s < m else 0.0 for s in range(m + 1)])
    phi = np.empty(m)
    for i in range(m):
        without = codes[((codes >> i) & 1) == 0]
        phi[i] = float(np.dot(weight[size[without]], v[without | (1 << i)] - v[without]))
    return phi


def sample_masks(m: int, n_samples: int, rng: np.random.Generator, paired: bool = True) -> np.ndarray:
    """Coalitions drawn with probability proportional to the Shapley kernel.

    Sizes are drawn from ``p(s) ~ (m-1) / (s (m-s))`` (the kernel summed over
    all coalitions of that size), members uniformly given the size. With
    ``paired`` each draw also contributes its complement.
    """
    sizes = np.arange(1, m)
    p = 1.0 / (sizes * (m - sizes))
    p /= p.sum()
    n_draw = (n_samples + 1) // 2 if paired else n_samples
    drawn = rng.choice(sizes, size=n_draw, p=p)
    masks = np.zeros((n_draw, m), dtype=bool)
    for r, s in enumerate(drawn):
        masks[r, rng.choice(m, size=s, replace=False)] = True
    if paired:
        masks = np.concatenate([masks, ~masks])[:n_samples]
    return masks


def _solve_constrained(masks, weights, y, delta) -> np.ndarray:
    """Weighted least squares for ``y ~ masks @ phi`` subject to ``sum(phi) = delta``.

    The constraint is eliminated by substituting the last coefficient. A
    rank-deficient design (common with few paired draws, since a mask and
    its complement give the same row up to sign) gets the minimum-norm
    solution; fewer distinct masks than features is refused.
    """
    m = masks.shape[1]
    n_distinct = len(np.unique(masks, axis=0))
    if n_distinct < m:
        raise Underdetermined(f"{n_distinct} distinct coalitions cannot determine {m} attributions")
    Z = masks.astype(np.float64)
    A = Z[:, :-1] - Z[:, -1:]
    b = y - Z[:, -1] * delta
    sw = np.sqrt(weights)
    head, *_ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    return np.append(head, delta - head.sum())


def kernel_shap(f: Callable, row, baseline, n_samples: Optional[int] = None, seed=0,
                paired: bool = True) -> np.ndarray:
    """KernelSHAP estimate with the efficiency constraint enforced exactly.

    ``n_samples=None`` (or any budget of at least ``2^m - 2``) enumerates
    every proper non-empty coalition once, weighted by the Shapley kernel;
    this reproduces the exact Shapley values. Smaller budgets sample
    coalitions from the kernel distribution and weight them equally.
    """
    row = np.asarray(row, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    m = row.size
    if m < 2:
        full_empty = _evaluate(f, row, baseline, np.array([[True], [False]]))
        return np.array([full_empty[0] - full_empty[1]])
    complete = (1 << m) - 2
    if n_samples is not None and n_samples < min(m + 2, complete):
        raise ValueError(f"n_samples must be at least m + 2 = {m + 2}")
    ends = _evaluate(f, row, baseline, np.array([[False] * m, [True] * m]))
    f_empty, f_full = ends
    delta = f_full - f_empty
    if n_samples is None or (m <= MAX_EXACT_FEATURES and n_samples >= complete):
        masks = _all_masks(m)[1:-1]
        weights = shapley_kernel(m, masks.sum(axis=1))
    else:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        masks = sample_masks(m, n_samples, rng, paired)
        weights = np.ones(masks.shape[0])
    y = _evaluate(f, row, baseline, masks) - f_empty
    return _solve_constrained(masks, weights, y, delta)


def cosine_similarity(a, b) -> float:
    """``a . b / (|a| |b|)``; NaN when either vector is zero."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("vectors differ in length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float("nan")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def average_ranks(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    s = a[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], a.size]
    for lo, hi in zip(starts, ends):
        ranks[order[lo:hi]] = (lo + hi - 1) / 2.0 + 1.0
    return ranks


def spearman(a, b) -> float:
    """Pearson correlation of average ranks; NaN when either side is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise ValueError("spearman needs two equal-length vectors of length >= 2")
    ra, rb = average_ranks(a), average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0:
        return float("nan")
    return float(np.clip(ra @ rb / den, -1.0, 1.0))


@dataclass
class TracePoint:
    budget: int
    mean_cosine: float
    mean_spearman: float
    n_rows: int
    complete: bool = False
    mean_cosine_exact: Optional[float] = None
    mean_spearman_exact: Optional[float] = None


@dataclass
class ConvergenceTrace:
    points: list = field(default_factory=list)
    per_row: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        exact = any(p.mean_cosine_exact is not None for p in self.points)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["budget", "mean_cosine", "mean_spearman", "n_rows"]
            if exact:
                head += ["mean_cosine_vs_exact", "mean_spearman_vs_exact"]
            w.writerow(head)
            for p in self.points:
                row = [p.budget, repr(p.mean_cosine), repr(p.mean_spearman), p.n_rows]
                if exact:
                    row += ["" if p.mean_cosine_exact is None else repr(p.mean_cosine_exact),
                            "" if p.mean_spearman_exact is None else repr(p.mean_spearman_exact)]
                w.writerow(row)


def _nanmean(xs) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    xs = xs[~np.isnan(xs)]
    return float(xs.mean()) if xs.size else float("nan")


def convergence_trace(f: Callable, rows, scores, baseline, budgets: Sequence[Optional[int]],
                      seed=0, compare_exact: bool = False, f_per_row: Optional[Callable] = None,
                      threads: int = 1) -> ConvergenceTrace:
    """Similarity of KernelSHAP estimates to reference ``scores`` per budget.

    ``budgets`` must increase; ``None`` stands for complete enumeration and
    may only come last. ``scores[r]`` is the model's own attribution of
    ``rows[r]``. With ``compare_exact`` the estimates are also compared to
    exact Shapley values. ``f_per_row(r)`` may return a row-specific value
    function (e.g. the predicted class's logit); it defaults to ``f``.
    Rows are independent (each has its own random stream), so ``threads > 1``
    changes nothing but wall time.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    scores = np.asarray(scores, dtype=np.float64)
    if rows.shape[0] == 0:
        raise ValueError("convergence trace needs at least one row")
    m = rows.shape[1]
    full = (1 << m) - 2
    numeric = [full if b is None else int(b) for b in budgets]
    if any(b is None for b in budgets[:-1]) or any(x >= y for x, y in zip(numeric, numeric[1:])):
        raise ValueError("budgets must be strictly increasing")
    fn = f_per_row or (lambda r: f)
    n = rows.shape[0]

    def run(jobs):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(lambda job: job(), jobs))
        return [job() for job in jobs]

    exact = None
    if compare_exact:
        exact = run([partial(exact_shapley, fn(r), rows[r], baseline) for r in range(n)])
    trace = ConvergenceTrace()
    for b, nb in zip(budgets, numeric):
        cos, sp, cos_x, sp_x = [], [], [], []
        ests = run([partial(kernel_shap, fn(r), rows[r], baseline, None if b is None else nb,
                            seed=np.random.default_rng([int(seed), nb, r])) for r in range(n)])
        for r, est in enumerate(ests):
            cos.append(cosine_similarity(est, scores[r]))
            sp.append(spearman(est, scores[r]))
            if exact is not None:
                cos_x.append(cosine_similarity(est, exact[r]))
                sp_x.append(spearman(est, exact[r]))
            trace.per_row.append({"budget": nb, "row": r, "estimate": est.tolist(),
                                  "cosine": cos[-1], "spearman": sp[-1]})
        trace.points.append(TracePoint(
            nb, _nanmean(cos), _nanmean(sp), n, b is None or nb >= full,
            _nanmean(cos_x) if exact is not None else None,
            _nanmean(sp_x) if exact is not None else None,
        ))
    return trace
