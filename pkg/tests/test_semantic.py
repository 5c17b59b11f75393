import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rispsc.semantic import (ProfileError, SemanticProfile, allocate_ratios, overhead,
                             segment_budgets)

from helpers import grid_ratio_optimum, overhead_many, random_profile

TWO_SEG = SemanticProfile((-1.0, -2.0), (1.0, 1.9), (1.0, 0.9, 0.5), 0.5)


def test_overhead_examples():
    assert overhead(TWO_SEG, 1.0) == pytest.approx(0.0)
    assert overhead(TWO_SEG, 0.9) == pytest.approx(0.1)
    assert -2.0 * 0.9 + 1.9 == pytest.approx(0.1)
    assert overhead(TWO_SEG, 0.5) == pytest.approx(0.9)
    with pytest.raises(ProfileError):
        overhead(TWO_SEG, 0.4)
    with pytest.raises(ProfileError):
        overhead(TWO_SEG, 1.1)


def test_segment_budgets_examples():
    Q = segment_budgets([TWO_SEG])
    assert Q[0] == 0.0
    assert Q[1] == pytest.approx(0.1)
    assert Q[2] == pytest.approx(0.9)
    assert np.all(np.diff(segment_budgets([TWO_SEG, TWO_SEG])) > 0)


def test_mixed_segment_counts_rejected():
    one = SemanticProfile((-1.0,), (1.0,), (1.0, 0.3), 0.3)
    with pytest.raises(ProfileError):
        segment_budgets([one, TWO_SEG])


@pytest.mark.parametrize("kwargs", [
    dict(slopes=(1.0, -2.0), intercepts=(1.0, 1.9), bounds=(1.0, 0.9, 0.5), rho_min=0.5),
    dict(slopes=(-1.0, -2.0), intercepts=(1.0, 1.8), bounds=(1.0, 0.9, 0.5), rho_min=0.5),
    dict(slopes=(-2.0, -1.0), intercepts=(2.0, 1.1), bounds=(1.0, 0.9, 0.5), rho_min=0.5),
    dict(slopes=(-1.0, -2.0), intercepts=(1.0, 1.9), bounds=(1.0, 0.5, 0.9), rho_min=0.5),
    dict(slopes=(-1.0, -2.0), intercepts=(1.0, 1.9), bounds=(1.0, 0.9, 0.5), rho_min=0.3),
    dict(slopes=(-1.0, -2.0), intercepts=(1.0, 1.9), bounds=(0.9, 0.8, 0.5), rho_min=0.5),
    dict(slopes=(-1.0,), intercepts=(1.0, 2.0), bounds=(1.0, 0.5), rho_min=0.5),
])
def test_invalid_profiles(kwargs):
    with pytest.raises(ProfileError):
        SemanticProfile(**kwargs)


def test_zero_budget_keeps_ratio_one():
    alloc = allocate_ratios([TWO_SEG, TWO_SEG], [3.0, 1.0], 0.0)
    np.testing.assert_array_equal(alloc.rho, [1.0, 1.0])


def test_large_budget_reaches_floor():
    alloc = allocate_ratios([TWO_SEG, TWO_SEG], [3.0, 1.0], 5.0)
    np.testing.assert_array_equal(alloc.rho, [0.5, 0.5])


def test_partial_step_example():
    alloc = allocate_ratios([TWO_SEG, TWO_SEG], [2.0, 1.0], 0.25)
    assert alloc.segment == 2
    np.testing.assert_allclose(alloc.rho, [0.875, 0.9], atol=1e-12)
    assert alloc.consumed == pytest.approx(0.25)
    # the grid finds a better split (user 2 left uncompressed), within 2%
    best = grid_ratio_optimum([TWO_SEG, TWO_SEG], np.array([2.0, 1.0]), 0.25)
    greedy = 2.0 / 0.875 + 1.0 / 0.9
    assert best == pytest.approx(2.0 / 0.825 + 1.0, rel=1e-3)
    assert 0.98 * best <= greedy < best


def test_full_step_then_partial():
    # budget reaching past one full step moves the top user to the floor of the segment
    alloc = allocate_ratios([TWO_SEG, TWO_SEG], [2.0, 1.0], 0.2 + 0.8 + 0.1)
    np.testing.assert_allclose(alloc.rho, [0.5, 0.85], atol=1e-12)


def test_budget_below_rho_one_overhead_warns(caplog):
    costly = SemanticProfile.from_segments((-1.0, -2.0), (1.0, 0.9, 0.5), 0.5, value_at_one=0.4)
    alloc = allocate_ratios([costly], [1.0], 0.1)
    assert alloc.rho[0] == 1.0
    assert "budget" in caplog.text


def test_rate_shape_checked():
    with pytest.raises(ValueError):
        allocate_ratios([TWO_SEG], [1.0, 2.0], 0.1)


profile_sets = st.builds(
    lambda seed, K, D: [random_profile(np.random.default_rng([seed, k]), D) for k in range(K)],
    st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3))


@settings(max_examples=150, deadline=None)
@given(profile_sets, st.integers(0, 2**31), st.floats(0.0, 1.2))
def test_budget_feasible_and_in_bounds(profiles, seed, frac):
    rng = np.random.default_rng(seed)
    rates = rng.uniform(0, 10, len(profiles))
    Q = segment_budgets(profiles)
    budget = Q[0] + frac * (Q[-1] - Q[0])
    alloc = allocate_ratios(profiles, rates, budget)
    spent = sum(overhead_many(p, np.array([r]))[0] for p, r in zip(profiles, alloc.rho))
    assert spent <= budget + 1e-9
    assert alloc.consumed == pytest.approx(spent, abs=1e-12)
    for p, r in zip(profiles, alloc.rho):
        assert p.rho_min - 1e-12 <= r <= 1.0


@settings(max_examples=150, deadline=None)
@given(profile_sets, st.integers(0, 2**31), st.floats(0.0, 1.2), st.floats(0.0, 1.2))
def test_more_budget_never_raises_a_ratio(profiles, seed, f1, f2):
    rng = np.random.default_rng(seed)
    rates = rng.uniform(0, 10, len(profiles))
    Q = segment_budgets(profiles)
    lo, hi = sorted((f1, f2))
    a = allocate_ratios(profiles, rates, Q[0] + lo * (Q[-1] - Q[0])).rho
    b = allocate_ratios(profiles, rates, Q[0] + hi * (Q[-1] - Q[0])).rho
    assert np.all(b <= a + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 5), st.floats(0.0, 1.0))
def test_higher_rate_gets_lower_ratio(seed, K, frac):
    rng = np.random.default_rng(seed)
    profile = random_profile(rng, int(rng.integers(1, 4)))
    profiles = [profile] * K
    rates = rng.uniform(0, 10, K)
    Q = segment_budgets(profiles)
    rho = allocate_ratios(profiles, rates, frac * Q[-1]).rho
    for i in range(K):
        for j in range(K):
            if rates[i] > rates[j]:
                assert rho[i] <= rho[j] + 1e-12


def test_ties_favour_lower_index():
    rho = allocate_ratios([TWO_SEG, TWO_SEG], [1.0, 1.0], 0.25).rho
    assert rho[0] < rho[1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.floats(0.0, 1.0))
def test_single_user_spends_budget_exactly(seed, D, frac):
    rng = np.random.default_rng(seed)
    profile = random_profile(rng, D)
    Q = segment_budgets([profile])
    budget = frac * Q[-1]
    rho = allocate_ratios([profile], [1.0], budget).rho[0]
    assert 1.0 / rho == pytest.approx(grid_ratio_optimum([profile], np.array([1.0]), budget),
                                      rel=1e-9)
