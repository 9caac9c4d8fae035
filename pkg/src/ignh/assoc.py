"""Mixed-type association statistics used to weight feature-graph edges.

Every coefficient works on pairwise-complete observations: ``NaN`` in either
input drops that pair. Coefficients that are undefined on the data (a
constant column, a single class) come back as ``None`` instead of raising,
since the graph builder simply treats them as "no edge".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

FISHER_CLAMP = 1.0 - 1e-7


@dataclass(frozen=True)
class Assoc:
    r: float
    n: int
    p_value: float
    kind: str


def _complete(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d and of equal length")
    keep = ~(np.isnan(x) | np.isnan(y))
    return x[keep], y[keep]


# -- Student t tail via the regularized incomplete beta ---------------------

def _beta_cf(a: float, b: float, x: float, tol: float = 1e-16, max_iter: int = 10_000) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def p_value_t(r: float, n: int) -> float:
    """Two-sided p-value of H0: rho = 0 via t = r*sqrt((n-2)/(1-r^2)), n-2 dof."""
    if n < 3:
        raise ValueError(f"need n >= 3 for a correlation t-test, got {n}")
    r = float(r)
    if abs(r) >= 1.0:
        return 0.0
    df = n - 2.0
    # df / (df + t^2) collapses to 1 - r^2
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, 1.0 - r * r)))


# -- coefficients -----------------------------------------------------------

def pearson(x, y) -> Optional[Assoc]:
    x, y = _complete(x, y)
    n = x.size
    if n < 3:
        raise ValueError(f"pearson needs at least 3 complete pairs, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return Assoc(r, n, p_value_t(r, n), "pearson")


def point_biserial(x, y) -> Optional[Assoc]:
    """Correlation of a continuous ``x`` with a 0/1 ``y``.

    ``r = (mu1 - mu0) / sigma_n * sqrt(n1 * n0 / n^2)`` with ``sigma_n`` the
    population standard deviation of ``x``.
    """
    x, y = _complete(x, y)
    n = x.size
    if n < 3:
        raise ValueError(f"point_biserial needs at least 3 complete pairs, got {n}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("point_biserial expects a 0/1 indicator")
    ones = y == 1.0
    n1 = int(ones.sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        return None
    dx = x - x.mean()
    sigma = math.sqrt(float(dx @ dx) / n)
    if sigma == 0.0:
        return None
    # differences of centered means avoid cancellation in mu1 - mu0
    mu1 = float(dx[ones].mean())
    mu0 = float(dx[~ones].mean())
    r = (mu1 - mu0) / sigma * math.sqrt(n1 * n0) / n
    r = max(-1.0, min(1.0, r))
    return Assoc(r, n, p_value_t(r, n), "point_biserial")


def _tied_pairs(sorted_vals: np.ndarray) -> int:
    _, counts = np.unique(sorted_vals, return_counts=True)
    counts = counts.astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


def _count_inversions(a: np.ndarray) -> int:
    """Strict inversions (i < j, a[i] > a[j]) by bottom-up merge sort."""
    a = a.copy()
    n = a.size
    inversions = 0
    width = 1
    while width < n:
        for start in range(0, n - width, 2 * width):
            left = a[start:start + width]
            right = a[start + width:start + 2 * width]
            # each right element jumps over the left elements strictly greater than it
            pos_r = np.searchsorted(left, right, side="right")
            inversions += int(left.size * right.size - pos_r.sum())
            merged = np.empty(left.size + right.size, dtype=a.dtype)
            merged[pos_r + np.arange(right.size)] = right
            merged[np.searchsorted(right, left, side="left") + np.arange(left.size)] = left
            a[start:start + merged.size] = merged
        width *= 2
    return inversions


def kendall_counts(x, y) -> tuple[int, int, int, int, int]:
    """Return ``(n, C - D, P, T_x, T_y)`` from merge-sort pair counting."""
    x, y = _complete(x, y)
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    pairs = n * (n - 1) // 2
    t_x = _tied_pairs(xs)
    # joint ties: runs equal in both coordinates are contiguous after lexsort
    if n:
        change = np.ones(n, dtype=bool)
        change[1:] = (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])
        run = np.diff(np.append(np.flatnonzero(change), n)).astype(np.int64)
        t_xy = int((run * (run - 1) // 2).sum())
    else:
        t_xy = 0
    discordant = _count_inversions(ys)
    t_y = _tied_pairs(ys)
    s = pairs - t_x - t_y + t_xy - 2 * discordant
    return n, s, pairs, t_x, t_y


def kendall_tau(x, y) -> Optional[Assoc]:
    """Tie-corrected Kendall tau-b with a normal-approximation p-value."""
    n, s, pairs, t_x, t_y = kendall_counts(x, y)
    if n < 3:
        raise ValueError(f"kendall_tau needs at least 3 complete pairs, got {n}")
    denom = (pairs - t_x) * (pairs - t_y)
    if denom == 0:
        return None
    tau = max(-1.0, min(1.0, s / math.sqrt(denom)))
    z = 3.0 * s / math.sqrt(n * (n - 1) * (2 * n + 5) / 2.0)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return Assoc(tau, n, min(1.0, p), "kendall")


def fisher_average(rs: Sequence[float]) -> float:
    """Average correlations in Fisher-z space and map the mean back."""
    rs = np.asarray(rs, dtype=np.float64)
    if rs.size == 0:
        raise ValueError("fisher_average of an empty list")
    z = np.arctanh(np.clip(rs, -FISHER_CLAMP, FISHER_CLAMP))
    return float(np.tanh(z.mean()))


def cat_num_association(cat, num, alpha: float = 0.05) -> Optional[Assoc]:
    """Combine per-category point-biserial correlations of ``num``.

    Each observed category is one-hot binarized and correlated with ``num``;
    only components with ``p < alpha`` enter the Fisher average. Returns
    ``None`` when nothing is significant or the statistic is undefined.
    """
    cat, num = _complete(cat, num)
    levels = np.unique(cat)
    if levels.size < 2 or cat.size < 3:
        return None
    kept = []
    for level in levels:
        a = point_biserial(num, (cat == level).astype(np.float64))
        if a is None:
            # constant num on the complete pairs
            return None
        if a.p_value < alpha:
            kept.append(a)
    if not kept:
        return None
    r = fisher_average([a.r for a in kept])
    return Assoc(r, int(cat.size), min(a.p_value for a in kept), "point_biserial")
