"""Nonparametric paired testing: Wilcoxon signed-rank with exact small-n
p-values, and the Holm-Bonferroni stepwise family-wise correction.

The signed-rank test drops zero differences, assigns average ranks to tied
absolute differences, and reports the negative-rank sum W together with a
two-sided p-value. For n <= EXACT_LIMIT the p-value is exact: the null
distribution of the positive-rank sum over all 2^n sign assignments of the
observed ranks is built by dynamic programming (ranks are half-integers at
worst, so doubled ranks index an integer lattice). Beyond that, the normal
approximation with tie-corrected variance and a 0.5 continuity correction
is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EXACT_LIMIT = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float          # negative-rank sum
    rank_sum_positive: float
    rank_sum_negative: float
    n: int                    # pairs remaining after dropping zero differences
    p_value: float
    exact: bool
    degenerate: bool          # all differences were zero


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their rank span."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_p_two_sided(doubled_ranks: list[int], doubled_w_min: float) -> float:
    """P(positive-rank sum at least as extreme) by subset-sum counting.

    Enumerates the distribution of twice the positive-rank sum over all
    sign assignments; the null distribution is symmetric, so the two-sided
    p is twice the lower tail at min(W+, W-), capped at 1.
    """
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for d in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[d:] = counts[:counts.size - d]
        counts = counts + shifted
    cutoff = int(math.floor(doubled_w_min + 1e-9))
    lower = counts[:cutoff + 1].sum()
    p = 2.0 * lower / (2.0 ** len(doubled_ranks))
    return min(1.0, p)


def _normal_p_two_sided(w_plus: float, n: int, tie_sizes: Sequence[int]) -> float:
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    var -= sum(t ** 3 - t for t in tie_sizes) / 48.0
    if var <= 0:
        return 1.0
    z = (abs(w_plus - mu) - 0.5) / math.sqrt(var)
    z = max(z, 0.0)
    return math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float],
                         exact_limit: int = EXACT_LIMIT) -> WilcoxonResult:
    """Two-sided paired signed-rank test of x against y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"paired samples must be equal-length 1-D, got {x.shape} and {y.shape}")
    if x.size == 0:
        raise ValueError("need at least one pair")
    diff = x - y
    diff = diff[diff != 0.0]
    n = diff.size
    if n == 0:
        return WilcoxonResult(statistic=0.0, rank_sum_positive=0.0, rank_sum_negative=0.0,
                              n=0, p_value=1.0, exact=True, degenerate=True)
    absd = np.abs(diff)
    ranks = _average_ranks(absd)
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    w_min = min(w_plus, w_minus)
    if n <= exact_limit:
        doubled = [int(round(2.0 * r)) for r in ranks]
        p = _exact_p_two_sided(doubled, 2.0 * w_min)
        exact = True
    else:
        _, tie_counts = np.unique(absd, return_counts=True)
        p = _normal_p_two_sided(w_plus, n, tie_counts.tolist())
        exact = False
    return WilcoxonResult(statistic=w_minus, rank_sum_positive=w_plus,
                          rank_sum_negative=w_minus, n=n, p_value=p,
                          exact=exact, degenerate=False)


@dataclass(frozen=True)
class HolmResult:
    p_value: float
    p_adjusted: float
    reject: bool


def holm_bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[HolmResult]:
    """Stepwise family-wise correction; results follow the input order.

    Sorted ascending, hypothesis k of m (1-based) is rejected iff
    p_(k) <= alpha / (m - k + 1) and every earlier hypothesis was rejected.
    Adjusted p-values are the running maximum of min(1, (m - k + 1) * p_(k)).
    """
    p = list(p_values)
    for v in p:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"p-value {v} outside [0, 1]")
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adjusted = [0.0] * m
    reject = [False] * m
    running = 0.0
    chain_alive = True
    for k, idx in enumerate(order):
        running = max(running, min(1.0, (m - k) * p[idx]))
        adjusted[idx] = running
        if chain_alive and p[idx] <= alpha / (m - k):
            reject[idx] = True
        else:
            chain_alive = False
    return [HolmResult(p_value=p[i], p_adjusted=adjusted[i], reject=reject[i])
            for i in range(m)]
