import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from oracles import kkt_oracle, pav
from pricebounds.adjuster import (CC, MN, MN_CC, NA, ZERO_WEIGHT_RIDGE, AdjustmentVariant,
                                adjust, build_problem, constraint_blocks,
                                constraint_residuals)
from pricebounds.domain import BoundsProfile, MarginGrid
from pricebounds.exceptions import InvalidInputError
from pricebounds.qp import solve


def profile(lower, upper, weight=None):
    n = len(lower)
    w = np.ones(n) if weight is None else np.asarray(weight, float)
    return BoundsProfile(MarginGrid(0.0, float(n), 1.0), np.asarray(lower, float),
                         np.asarray(upper, float), w)


def oracle_adjust(p, variant):
    """Brute-force projection with the constraints written as G x <= h."""
    n = p.n_bins
    w = np.concatenate([p.weight, p.weight])
    target = np.concatenate([p.lower, p.upper])
    G, h = [], []
    for _, A, l, u in constraint_blocks(n, variant):
        A = A.toarray()
        for row, lo, hi in zip(A, l, u):
            if np.isfinite(hi):
                G.append(row)
                h.append(hi)
            if np.isfinite(lo):
                G.append(-row)
                h.append(-lo)
    x, _ = kkt_oracle(np.diag(2 * w), -2 * w * target, np.array(G), np.array(h))
    return x[:n], x[n:]


class TestVariant:
    def test_names(self):
        assert [v.name for v in (NA, MN, CC, MN_CC)] == ["NA", "MN", "CC", "MN-CC"]
        assert AdjustmentVariant.parse("mn_cc") is MN_CC
        with pytest.raises(InvalidInputError):
            AdjustmentVariant.parse("XX")


class TestExamples:
    def test_feasible_input_is_fixed_point(self):
        # Upper bounds [5, 7, 8] are increasing and concave.
        p = profile([1, 2, 4], [5, 7, 8])
        out = adjust(p, MN_CC)
        assert_allclose(out.lower, [1, 2, 4], atol=1e-8)
        assert_allclose(out.upper, [5, 7, 8], atol=1e-8)

    def test_non_concave_upper_is_moved(self):
        # [5, 6, 8] has a positive second difference, so MN-CC must change it.
        out = adjust(profile([1, 2, 4], [5, 6, 8]), MN_CC)
        assert np.diff(out.upper, 2)[0] <= 1e-8
        assert_allclose(out.lower, [1, 2, 4], atol=1e-8)

    def test_pav_example(self):
        out = adjust(profile([2, 1, 3], [10, 10, 10]), MN)
        assert_allclose(out.lower, [1.5, 1.5, 3], atol=1e-8)
        assert_allclose(out.upper, [10, 10, 10], atol=1e-8)

    def test_zero_weight_middle(self):
        out = adjust(profile([1, 5, 3], [9, 9, 9], [1, 0, 1]), MN)
        # The vanishing ridge on the zero-weight bin moves its neighbours by
        # O(ZERO_WEIGHT_RIDGE); the middle value is pinned to the constraint.
        assert_allclose(out.lower[[0, 2]], [1, 3], atol=10 * ZERO_WEIGHT_RIDGE)
        assert out.lower[0] - 1e-9 <= out.lower[1] <= out.lower[2] + 1e-9
        assert_allclose(out.lower[1], out.lower[2], atol=1e-9)

    def test_crossing_midpoint(self):
        # Shape constraints off, lb <= ub on: the problem build_problem(., NA) poses.
        p = profile([1.0, 5.0, 1.0], [4.0, 3.0, 4.0])
        lo, hi = oracle_adjust(p, NA)
        assert_allclose(lo, [1, 4, 1], atol=1e-9)
        assert_allclose(hi, [4, 4, 4], atol=1e-9)
        sol = solve(build_problem(p, NA))
        assert sol.solved
        assert_allclose(sol.x / 100, np.concatenate([lo, hi]), atol=1e-6)

    def test_na_is_identity(self):
        p = profile([3, 1, 2], [0, 0, 0])
        assert adjust(p, NA) is p

    def test_too_few_bins(self):
        with pytest.raises(InvalidInputError):
            adjust(profile([1, 2], [3, 4]), CC)
        with pytest.raises(InvalidInputError):
            adjust(profile([1], [3]), MN)

    def test_provenance(self):
        out = adjust(profile([2, 1, 3], [10, 10, 10]), "MN-CC")
        assert str(out.provenance).startswith("adjusted:MN-CC")


def random_profile(rng, n):
    base = np.sort(rng.uniform(0.3, 1.1, n))
    lb = base - rng.uniform(0, 0.2, n) + rng.normal(0, 0.05, n)
    ub = base + rng.uniform(0, 0.2, n) + rng.normal(0, 0.05, n)
    return profile(lb / 100, ub / 100, rng.integers(1, 30, n))


@pytest.mark.parametrize("variant", [MN, CC, MN_CC])
def test_matches_oracle(variant):
    rng = np.random.default_rng({"MN": 1, "CC": 2, "MN-CC": 3}[variant.name])
    for _ in range(6):
        n = int(rng.integers(3, 7))
        p = random_profile(rng, n)
        out = adjust(p, variant)
        lo, hi = oracle_adjust(profile(100 * p.lower, 100 * p.upper, p.weight), variant)
        assert_allclose(100 * out.lower, lo, atol=1e-5)
        assert_allclose(100 * out.upper, hi, atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**31 - 1))
def test_feasible_and_idempotent(n, seed):
    rng = np.random.default_rng(seed)
    p = random_profile(rng, n)
    out = adjust(p, MN_CC)
    assert max(constraint_residuals(out, MN_CC).values()) <= 1e-6
    assert np.all(out.lower <= out.upper)
    again = adjust(out, MN_CC)
    assert_allclose(again.lower, out.lower, atol=1e-7)
    assert_allclose(again.upper, out.upper, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_monotone_only_is_isotonic(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.integers(1, 10, n).astype(float)
    lb = rng.normal(0.6, 0.2, n) / 100
    ub = np.full(n, 0.05)  # far above, so lb <= ub never binds
    out = adjust(profile(lb, ub, w), MN)
    assert_allclose(out.lower, pav(lb, w), atol=1e-8 / 100)
    assert_allclose(out.upper, ub, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**31 - 1))
def test_objective_not_worse_than_feasible(n, seed):
    rng = np.random.default_rng(seed)
    p = random_profile(rng, n)
    out = adjust(p, MN_CC)
    # A random feasible profile: increasing convex lower, increasing concave upper above it.
    x = np.arange(n, dtype=float)
    a, b = np.sort(rng.uniform(0, 0.001, 2))
    lb = 0.003 + a * x + rng.uniform(0, 1e-4) * x ** 2
    ub = lb[-1] + 0.001 + b * np.sqrt(x) + 1e-4 * x
    cand = profile(lb, ub)
    assert max(constraint_residuals(cand, MN_CC).values()) <= 1e-12

    def obj(q):
        return np.sum(p.weight * ((q.lower - p.lower) ** 2 + (q.upper - p.upper) ** 2))
    assert obj(out) <= obj(cand) * (1 + 1e-6) + 1e-16


def test_real_sized_profile():
    rng = np.random.default_rng(0)
    n = 80
    w = rng.integers(0, 40, n).astype(float)
    w[rng.uniform(size=n) < 0.2] = 0
    c = np.linspace(0.003, 0.011, n)
    p = BoundsProfile(MarginGrid(0.003, 0.011, 0.0001), c - 0.001 + rng.normal(0, 3e-4, n),
                      c + 0.001 + rng.normal(0, 3e-4, n), w)
    out = adjust(p, MN_CC)
    res = constraint_residuals(out, MN_CC)
    assert max(res.values()) <= 1e-6
    assert_array_equal(out.weight, p.weight)
