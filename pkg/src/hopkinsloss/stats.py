"""Mann-Whitney U comparisons and Student-t confidence intervals."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats as st

EXACT_MAX_TOTAL = 12


@dataclass
class Comparison:
    group_a: np.ndarray
    group_b: np.ndarray
    U: float
    p_two_sided: float
    exact: bool

    @property
    def stars(self) -> str:
        return significance_stars(self.p_two_sided)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def _exact_u_distribution(n1: int, n2: int) -> np.ndarray:
    """Counts of U = 0..n1*n2 over all placements of group a among n1+n2 ranks."""
    counts = np.zeros(n1 * n2 + 1, dtype=np.int64)
    base = n1 * (n1 + 1) // 2
    for ranks in itertools.combinations(range(1, n1 + n2 + 1), n1):
        counts[sum(ranks) - base] += 1
    return counts


def mann_whitney_u(a, b) -> Comparison:
    """Two-sided Mann-Whitney U test; ``U`` counts pairs with a > b (ties count 1/2).

    Small tie-free samples (n1 + n2 <= 12) get the exact permutation p-value,
    everything else the tie- and continuity-corrected normal approximation.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = st.rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool((tie_counts > 1).any())
    N = n1 + n2

    if N <= EXACT_MAX_TOTAL and not has_ties:
        counts = _exact_u_distribution(n1, n2)
        total = counts.sum()
        k = int(round(u))
        lower = counts[:k + 1].sum() / total
        upper = counts[k:].sum() / total
        return Comparison(a, b, u, min(1.0, 2.0 * min(lower, upper)), True)

    mu = n1 * n2 / 2.0
    tie_term = float((tie_counts ** 3 - tie_counts).sum()) / (N * (N - 1))
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term)
    if var <= 0:
        return Comparison(a, b, u, 1.0, False)
    z = max(abs(u - mu) - 0.5, 0.0) / np.sqrt(var)
    p = min(1.0, 2.0 * st.norm.sf(z))
    # keep p strictly positive for extreme separations
    return Comparison(a, b, u, max(p, np.finfo(float).tiny), False)


def mean_ci95(x) -> tuple[float, float]:
    """Mean and Student-t 95% half-width using the sample (n-1) standard deviation."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 values for a confidence interval")
    sem = x.std(ddof=1) / np.sqrt(x.size)
    return float(x.mean()), float(st.t.ppf(0.975, x.size - 1) * sem)
