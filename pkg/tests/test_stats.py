import itertools

import numpy as np
import pytest
from scipy import stats as st

from hopkinsloss.autodiff import make_rng
from hopkinsloss.stats import mann_whitney_u, mean_ci95, significance_stars
from oracles import mann_whitney_enumeration


def test_two_by_two_example():
    c = mann_whitney_u([1, 2], [3, 4])
    assert c.U == 0 and c.exact
    assert c.p_two_sided == pytest.approx(1 / 3, abs=1e-15)
    assert c.stars == "ns"


def test_identical_groups():
    c = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert c.U == 4.5 and c.p_two_sided == 1.0


def test_small_sizes_match_enumeration():
    rng = make_rng(0)
    for n1 in range(1, 6):
        for n2 in range(1, 6):
            vals = rng.permutation(n1 + n2).astype(float)
            a, b = vals[:n1], vals[n1:]
            c = mann_whitney_u(a, b)
            u, p = mann_whitney_enumeration(a, b)
            assert c.U == u and abs(c.p_two_sided - p) < 1e-12


def test_u_symmetry_with_ties():
    rng = make_rng(1)
    for _ in range(20):
        a = rng.integers(0, 5, 9)
        b = rng.integers(0, 5, 7)
        assert mann_whitney_u(a, b).U + mann_whitney_u(b, a).U == 63


def test_exact_and_normal_agree_at_eight_each():
    rng = make_rng(2)
    for _ in range(30):
        a, b = rng.normal(size=8), rng.normal(0.8, 1, size=8)
        exact = st.mannwhitneyu(a, b, method="exact").pvalue
        approx = mann_whitney_u(a, b)
        assert not approx.exact
        assert abs(exact - approx.p_two_sided) < 0.02


def test_normal_approximation_vs_permutations():
    rng = make_rng(3)
    a, b = rng.normal(size=30), rng.normal(0.5, 1, size=30)
    c = mann_whitney_u(a, b)
    pooled = np.concatenate([a, b])
    dev = abs(c.U - 450)
    hits = 0
    trials = 20_000
    for _ in range(trials):
        perm = rng.permutation(pooled)
        r = st.rankdata(perm)
        u = r[:30].sum() - 465
        hits += abs(u - 450) >= dev
    assert abs(c.p_two_sided - hits / trials) < 0.01


def test_matches_scipy_with_ties():
    a = [1, 2, 2, 3, 5, 5, 7, 8]
    b = [2, 3, 3, 4, 6, 9, 9, 10, 11]
    ref = st.mannwhitneyu(a, b, method="asymptotic", use_continuity=True)
    c = mann_whitney_u(a, b)
    assert c.U == ref.statistic
    assert c.p_two_sided == pytest.approx(ref.pvalue, rel=1e-12)


def test_p_stays_positive_and_bounded():
    c = mann_whitney_u(np.arange(100), np.arange(1000, 1100))
    assert 0 < c.p_two_sided < 1e-30 and c.stars == "***"
    assert mann_whitney_u([1.0] * 20, [1.0] * 20).p_two_sided == 1.0


def test_empty_group():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def test_stars_thresholds():
    assert [significance_stars(p) for p in (0.0005, 0.001, 0.005, 0.01, 0.03, 0.05, 0.5)] == \
        ["***", "**", "**", "*", "*", "ns", "ns"]


def test_ci_examples():
    assert mean_ci95([3.0, 3.0, 3.0]) == (3.0, 0.0)
    m, h = mean_ci95([0.0, 1.0])
    # sample standard deviation of {0, 1} is 1/sqrt(2)
    assert m == 0.5 and h == pytest.approx(12.706204736 * 0.5, rel=1e-9)
    m, h = mean_ci95(make_rng(4).normal(size=10_000))
    assert abs(m) < 0.05 and h == pytest.approx(1.96 / 100, rel=0.05)
    with pytest.raises(ValueError):
        mean_ci95([1.0])
