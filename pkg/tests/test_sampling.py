"""Sampling plans: disjointness, uniformity laws, determinism, serialization."""

import json

import numpy as np
import pytest
from scipy import stats

from forestvar import (
    DegenerateEnsemble,
    GroupTooSmall,
    KOutOfRange,
    MTooLarge,
    RandomStream,
    SamplingPlan,
    sample_bootstrap_plan,
    sample_matched_groups,
    sample_subset_plan,
)

RS = RandomStream(2024)


def test_partition_when_mk_equals_n():
    plan = sample_matched_groups(4, 2, 2, 1, RS)
    union = set(plan.groups[0].ravel().tolist())
    assert union == {0, 1, 2, 3}
    assert set(plan.groups[0, 0]) & set(plan.groups[0, 1]) == set()


def test_leftover_index_unused():
    plan = sample_matched_groups(7, 3, 2, 5, RS)
    for b in range(5):
        g = plan.groups[b]
        assert len(set(g[0]) | set(g[1])) == 6
        assert len(set(range(7)) - set(g.ravel().tolist())) == 1


def test_matched_disjointness_exhaustive():
    plan = sample_matched_groups(20, 4, 5, 64, RS.split([1]))
    for b in range(plan.B):
        seen = set()
        for i in range(plan.M):
            s = set(plan.groups[b, i].tolist())
            assert len(s) == 4
            assert not (s & seen)
            seen |= s


def test_group_position_marginal_frequency():
    # P(index j in first block) = k/n = 1/2; binomial oracle at 3 sigma
    B = 10_000
    plan = sample_matched_groups(10, 5, 2, B, RS.split([2]))
    se = np.sqrt(0.5 * 0.5 / B)
    for j in range(10):
        freq = (plan.groups[:, 0, :] == j).any(axis=1).mean()
        assert abs(freq - 0.5) <= 3 * se


def test_matched_marginal_uniformity_chi2():
    # membership count of each index across all B*M sets: chi-square at 1%
    n, k, M, B = 12, 3, 3, 4000
    plan = sample_matched_groups(n, k, M, B, RS.split([3]))
    counts = np.bincount(plan.groups.ravel(), minlength=n)
    expected = B * M * k / n
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < stats.chi2.ppf(0.99, df=n - 1)


def test_matched_errors():
    with pytest.raises(MTooLarge):
        sample_matched_groups(200, 100, 3, 10, RS)
    with pytest.raises(KOutOfRange):
        sample_matched_groups(10, 10, 2, 5, RS)
    with pytest.raises(GroupTooSmall):
        sample_matched_groups(10, 5, 1, 5, RS)
    with pytest.raises(DegenerateEnsemble):
        sample_matched_groups(10, 5, 2, 0, RS)


def test_subsets_single_possible_subset():
    plan = sample_subset_plan(3, 3, 4, RS)
    assert np.array_equal(plan.groups, np.tile([0, 1, 2], (4, 1, 1)))


def test_subsets_uniform_over_all_six():
    B = 60_000
    plan = sample_subset_plan(4, 2, B, RS.split([4]))
    keys = [tuple(s) for s in plan.groups[:, 0, :].tolist()]
    se = np.sqrt((1 / 6) * (5 / 6) / B)
    from collections import Counter

    freqs = Counter(keys)
    assert len(freqs) == 6
    for pair, cnt in freqs.items():
        assert abs(cnt / B - 1 / 6) <= 3 * se, pair


def test_subsets_b_boundary():
    # k = n is fine for subsets; B = 1 is the degenerate case
    with pytest.raises(DegenerateEnsemble):
        sample_subset_plan(5, 2, 1, RS)
    sample_subset_plan(5, 5, 2, RS)


def test_bootstrap_single_atom():
    plan = sample_bootstrap_plan(1, 3, 2, RS)
    assert np.array_equal(plan.groups, np.zeros((2, 1, 3), dtype=np.int64))


def test_bootstrap_multiset_frequency():
    # P(multiset {0,0}) = 1/4 for n = k = 2
    B = 40_000
    plan = sample_bootstrap_plan(2, 2, B, RS.split([5]))
    freq = (plan.groups[:, 0, :] == 0).all(axis=1).mean()
    se = np.sqrt(0.25 * 0.75 / B)
    assert abs(freq - 0.25) <= 3 * se


def test_bootstrap_occupancy():
    # E[#distinct of 5 draws from 5] = 5 (1 - (4/5)^5) = 3.3616
    B = 40_000
    plan = sample_bootstrap_plan(5, 5, B, RS.split([6]))
    distinct = np.array([len(set(row.tolist())) for row in plan.groups[:, 0, :]])
    se = distinct.std(ddof=1) / np.sqrt(B)
    assert abs(distinct.mean() - 3.3616) <= 3 * se


def test_determinism_and_b_stability():
    a = sample_matched_groups(30, 7, 2, 50, RandomStream(9))
    b = sample_matched_groups(30, 7, 2, 50, RandomStream(9))
    assert np.array_equal(a.groups, b.groups)
    # growing B leaves earlier groups untouched
    c = sample_matched_groups(30, 7, 2, 80, RandomStream(9))
    assert np.array_equal(a.groups, c.groups[:50])


def test_plan_json_roundtrip():
    plan = sample_matched_groups(9, 2, 3, 4, RS.split([7]))
    blob = json.dumps(plan.to_jsonable())
    back = SamplingPlan.from_jsonable(json.loads(blob))
    assert back.mode == plan.mode == "matched"
    assert np.array_equal(back.groups, plan.groups)


def test_plans_are_immutable():
    plan = sample_matched_groups(9, 2, 3, 4, RS)
    with pytest.raises(ValueError):
        plan.groups[0, 0, 0] = 5
