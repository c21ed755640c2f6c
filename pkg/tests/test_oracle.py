"""Exact combinatorial identities and brute-force estimator checks."""

from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forestvar import (
    CombinatorialBlowup,
    Dataset,
    IndexOutOfRange,
    KTooLarge,
    KTooLargeForVh,
    MeanKernel,
    OneNearestNeighborKernel,
    RandomStream,
    TargetPoint,
)
from forestvar.oracle import (
    XiProfile,
    complete_u_bruteforce,
    complete_variance_bruteforce,
    complete_vh_bruteforce,
    complete_vs_bruteforce,
    complete_xi_tilde_bruteforce,
    delta_bm,
    double_u_weights,
    gamma_coeff,
    gamma_coeffs,
    hoeffding_variance,
    identity_checks,
    matched_variance_closed_form,
    mean_kernel_profile,
    one_nn_weights,
    subset_variance_closed_form,
    vh_minus_vs_identity,
)

GOLDEN_DATA = Dataset(
    features=[[0.0], [1.0], [2.0], [3.0]], response=[1.0, 2.0, 3.0, 4.0]
)


def test_gamma_examples():
    assert gamma_coeff(4, 2, 0) == Fraction(1, 6)
    assert gamma_coeff(4, 2, 1) == Fraction(4, 6)
    assert gamma_coeff(4, 2, 2) == Fraction(1, 6)


def test_gamma_normalization_exact():
    for n in range(1, 31):
        for k in range(1, n + 1):
            assert sum(gamma_coeffs(n, k)) == 1


def test_gamma_support_vanishes_below_forced_overlap():
    assert gamma_coeff(10, 8, 1) == 0
    for d in range(8 + 1):
        assert (gamma_coeff(10, 8, d) == 0) == (d < 2 * 8 - 10)


def test_gamma_bounds_checked():
    with pytest.raises(IndexOutOfRange):
        gamma_coeff(4, 5, 1)
    with pytest.raises(IndexOutOfRange):
        gamma_coeff(4, 2, 3)


def test_hoeffding_zero_profile():
    prof = XiProfile.from_xi((0.0,) * 6)
    assert hoeffding_variance(10, 5, prof) == 0
    assert vh_minus_vs_identity(10, 5, prof) == 0


def test_mean_kernel_exact_sigma2_over_n():
    for n in range(2, 26):
        for k in range(1, n + 1):
            prof = mean_kernel_profile(n, k, Fraction(7, 3))
            a = hoeffding_variance(n, k, prof)
            b = vh_minus_vs_identity(n, k, prof)
            assert a == b == Fraction(7, 3) / n


@given(
    st.integers(min_value=2, max_value=24),
    st.data(),
)
@settings(max_examples=150, deadline=None)
def test_route_equality_random_profiles(n, data):
    k = data.draw(st.integers(min_value=1, max_value=n))
    gen = np.random.default_rng(data.draw(st.integers(min_value=0, max_value=2**31)))
    v_h = float(gen.uniform(0.1, 5.0))
    xi = np.concatenate([[0.0], gen.uniform(0.0, v_h, size=k - 1), [v_h]])
    prof = XiProfile.from_xi(tuple(xi))
    a = hoeffding_variance(n, k, prof)
    b = vh_minus_vs_identity(n, k, prof)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-15)


def test_profile_validation():
    with pytest.raises(ValueError):
        XiProfile(xi=(0.0, 1.0), xi_tilde=(0.5, 0.0), v_h=1.0)  # xi_tilde mismatch
    with pytest.raises(ValueError):
        XiProfile.from_xi((0.5, 1.0))  # xi[0] != 0
    with pytest.raises(ValueError):
        XiProfile.from_xi((0.0, 2.0, 1.0))  # xi_tilde goes negative


def test_one_nn_weights_sum_to_one():
    for n in range(1, 41):
        for k in range(1, n + 1):
            a = one_nn_weights(n, k)
            assert sum(a) == 1
            assert a[0] == Fraction(k, n)


def test_one_nn_variance_lower_bound():
    n, k = 12, 5
    a = one_nn_weights(n, k)
    var = sum(x * x for x in a)  # sigma^2 = 1
    assert var >= Fraction(k, n) ** 2


def test_one_nn_complete_average_weights_by_enumeration():
    # weight of y_i in the all-subset average = #(subsets whose min is i)/C(n,k)
    n, k = 9, 4
    counts = [0] * n
    for subset in combinations(range(n), k):
        counts[min(subset)] += 1
    a = one_nn_weights(n, k)
    for i in range(n - k + 1):
        assert Fraction(counts[i], comb(n, k)) == a[i]
    assert all(c == 0 for c in counts[n - k + 1:])


def test_one_nn_hoeffding_cross_check_exact():
    # pair-averaged covariances fed into the overlap decomposition reproduce
    # sigma^2 * sum a_i^2 exactly (deterministic ordered features, iid response)
    n, k = 8, 3
    subsets = list(combinations(range(n), k))
    pair_count = [0] * (k + 1)
    min_equal = [0] * (k + 1)
    for s1 in subsets:
        for s2 in subsets:
            d = len(set(s1) & set(s2))
            pair_count[d] += 1
            min_equal[d] += min(s1) == min(s2)
    xi = [Fraction(min_equal[d], pair_count[d]) for d in range(k + 1)]
    assert xi[0] == 0
    prof = XiProfile(
        xi=tuple(xi), xi_tilde=tuple(xi[-1] - x for x in xi), v_h=xi[-1]
    )
    a = one_nn_weights(n, k)
    assert hoeffding_variance(n, k, prof) == sum(x * x for x in a)


def test_golden_case_complete_estimators():
    vs = complete_vs_bruteforce(GOLDEN_DATA, MeanKernel(), 2)
    vh = complete_vh_bruteforce(GOLDEN_DATA, MeanKernel(), 2)
    est = complete_variance_bruteforce(GOLDEN_DATA, MeanKernel(), 2)
    assert complete_u_bruteforce(GOLDEN_DATA, MeanKernel(), 2) == 2.5
    assert abs(vs - 5 / 12) <= 1e-12
    assert abs(vh - 5 / 6) <= 1e-12
    assert abs(est - 5 / 12) <= 1e-12
    # equals the classical s^2/n for the mean kernel
    s2 = GOLDEN_DATA.response.var(ddof=1)
    assert abs(est - s2 / 4) <= 1e-12


def test_bruteforce_constant_response():
    data = Dataset(features=[[0.0], [1.0], [2.0], [3.0]], response=[5.0] * 4)
    assert complete_vs_bruteforce(data, MeanKernel(), 2) == 0.0
    assert complete_vh_bruteforce(data, MeanKernel(), 2) == 0.0
    assert complete_variance_bruteforce(data, MeanKernel(), 2) == 0.0


def test_regrouping_identity_exact():
    # gamma-weighted per-overlap averages == the all-subset variance
    gen = np.random.default_rng(99)
    for trial in range(3):
        n, k = [(8, 3), (9, 4), (10, 2)][trial]
        data = Dataset(
            features=gen.random((n, 2)), response=gen.standard_normal(n)
        )
        xt = complete_xi_tilde_bruteforce(data, MeanKernel(), k)
        g = gamma_coeffs(n, k)
        regrouped = sum(float(g[d]) * xt[d] for d in range(k + 1))
        direct = complete_vs_bruteforce(data, MeanKernel(), k)
        assert regrouped == pytest.approx(direct, rel=1e-12, abs=1e-15)
        assert xt[k] == 0.0


def test_bruteforce_unbiasedness_mc():
    # MC mean of the complete-enumeration estimate equals sigma^2/n within 3 SE
    n, k, reps = 6, 3, 3000
    root = RandomStream(314)
    ests = np.empty(reps)
    for r in range(reps):
        y = root.split([r]).generator().standard_normal(n)
        data = Dataset(features=np.zeros((n, 1)), response=y)
        ests[r] = complete_variance_bruteforce(data, MeanKernel(), k)
    se = ests.std(ddof=1) / np.sqrt(reps)
    assert abs(ests.mean() - 1 / 6) <= 3 * se


def test_bruteforce_with_one_nn_kernel_matches_weights():
    # U_n for the 1-NN kernel equals sum a_i y_i when rows are ordered by distance
    n, k = 8, 3
    x0 = TargetPoint([0.0])
    feats = np.arange(1.0, n + 1.0)[:, None]  # row i is the (i+1)-th nearest
    gen = np.random.default_rng(5)
    y = gen.standard_normal(n)
    data = Dataset(features=feats, response=y)
    u = complete_u_bruteforce(data, OneNearestNeighborKernel(), k, x=x0)
    a = one_nn_weights(n, k)
    expected = sum(float(a[i]) * y[i] for i in range(n - k + 1))
    assert u == pytest.approx(expected, rel=1e-12)


def test_double_u_weights_golden():
    assert double_u_weights(6, 2) == (
        Fraction(-9, 15),
        Fraction(8, 15),
        Fraction(1, 15),
    )


def test_double_u_weights_sum_zero_and_signs():
    for n in range(2, 25):
        for k in range(1, n // 2 + 1):
            w = double_u_weights(n, k)
            assert sum(w) == 0
            assert w[0] < 0
            assert all(x > 0 for x in w[1:])


def test_double_u_w1_limit():
    # w_1 / (k^2/n) -> 1 along k = floor(n^(1/3)); the leading correction is
    # exp(-k^2/n), so the error must shrink like n^(-1/3)
    errors = []
    for n in (64, 512, 4096):
        k = round(n ** (1 / 3))
        w = double_u_weights(n, k)
        ratio = float(w[1] / Fraction(k * k, n))
        assert ratio > 0
        assert abs(ratio - 1) < 2 * k * k / n
        errors.append(abs(ratio - 1))
    assert errors[0] > errors[1] > errors[2]


def test_double_u_requires_2k_le_n():
    with pytest.raises(KTooLarge):
        double_u_weights(5, 3)


def test_closed_forms():
    assert delta_bm(2, 5) == Fraction(1, 9)
    prof = mean_kernel_profile(10, 5)
    assert matched_variance_closed_form(10, 5, 2, 4, prof) == Fraction(1, 10)
    # B -> infinity recovers the complete variance
    big = matched_variance_closed_form(10, 5, 2, 10**12, prof)
    assert abs(float(big) - 0.1) < 1e-10


def test_subset_variance_law_mc():
    # independent-subsets ensemble: MC variance matches the closed form
    n, k, B, R = 20, 6, 10, 4000
    from forestvar import (
        ForestConfig,
        fit_forest,
        point_estimate,
        predict_matrix,
        sample_subset_plan,
    )

    cfg = ForestConfig(k=k, M=1, B=B, mtry=1, nodesize=1)
    pts = np.empty(R)
    for r in range(R):
        rep = RandomStream(1618).split([5, r])
        y = rep.split([10]).generator().standard_normal(n)
        data = Dataset(features=np.zeros((n, 1)), response=y)
        plan = sample_subset_plan(n, k, B, rep.split([11]))
        f = fit_forest(data, plan, cfg, rep.split([11]), kernel=MeanKernel())
        pts[r] = point_estimate(predict_matrix(f, [0.0]))
    truth = float(subset_variance_closed_form(n, k, B, mean_kernel_profile(n, k)))
    mc = pts.var(ddof=1)
    se = mc * np.sqrt(2 / (R - 1))
    assert abs(mc - truth) <= 3 * se


def test_enumeration_caps():
    big = Dataset(features=np.zeros((40, 1)), response=np.zeros(40))
    with pytest.raises(CombinatorialBlowup):
        complete_vs_bruteforce(big, MeanKernel(), 15)
    ten = Dataset(features=np.zeros((10, 1)), response=np.zeros(10))
    with pytest.raises(KTooLargeForVh):
        complete_vh_bruteforce(ten, MeanKernel(), 6)


def test_identity_checks_all_pass():
    results = identity_checks(max_n=16)
    assert results, "no checks ran"
    for name, ok, detail in results:
        assert ok, f"{name}: {detail}"
