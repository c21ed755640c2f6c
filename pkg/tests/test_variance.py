"""Variance estimators: hand-checked values, invariances, neighbors, CIs."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from forestvar import (
    Dataset,
    DegenerateEnsemble,
    ForestConfig,
    GroupTooSmall,
    NegativeVariance,
    PredictionMatrix,
    RandomStream,
    TargetPoint,
    bootstrap_variance_estimate,
    confidence_interval,
    estimate_vh_matched,
    estimate_vs,
    fit_forest,
    generate_neighbors,
    matched_variance_estimate,
    normal_quantile,
    sample_matched_groups,
    smoothed_variance_estimate,
)


def pm(values):
    return PredictionMatrix(values=np.asarray(values, float), target=np.zeros(1))


def test_vh_two_point():
    assert estimate_vh_matched(pm([[0.0], [2.0]])) == 2.0


def test_vh_constant():
    assert estimate_vh_matched(pm([[3.0, 3.0], [3.0, 3.0]])) == 0.0


def test_vh_hand_arithmetic():
    # groups are columns: (1,3) and (5,9) -> (2 + 8)/2
    assert estimate_vh_matched(pm([[1.0, 5.0], [3.0, 9.0]])) == 5.0


def test_vs_two_point():
    assert estimate_vs(pm([[0.0], [2.0]])) == 2.0


def test_vs_hand_arithmetic():
    assert estimate_vs(pm([[1.0, 5.0], [3.0, 9.0]])) == pytest.approx(35 / 3, rel=1e-15)


def test_matched_estimate_plugin():
    rep = matched_variance_estimate(pm([[0.0], [2.0]]))
    assert rep.variance_raw == 1.0 and not rep.clipped


def test_matched_estimate_clips_negative():
    rep = matched_variance_estimate(pm([[1.0, 5.0], [3.0, 9.0]]))
    assert rep.variance_raw == pytest.approx(-3.75, rel=1e-15)
    assert rep.variance == 0.0
    assert rep.clipped
    assert rep.ci_low == rep.point == rep.ci_high


def test_matched_estimate_constant():
    rep = matched_variance_estimate(pm([[2.0, 2.0], [2.0, 2.0]]))
    assert rep.variance_raw == 0.0 and not rep.clipped


def test_group_too_small():
    with pytest.raises(GroupTooSmall):
        estimate_vh_matched(pm([[1.0, 2.0]]))


def test_degenerate_ensemble():
    with pytest.raises(DegenerateEnsemble):
        estimate_vs(pm([[1.0]]))


def test_bootstrap_hand_arithmetic():
    rep = bootstrap_variance_estimate([0.0, 2.0], [0.0, 4.0])
    assert rep.vh_hat == 8.0 and rep.vs_hat == 2.0
    assert rep.variance_raw == 7.0
    assert rep.mode == "bootstrap"


def test_bootstrap_constant_inputs():
    rep = bootstrap_variance_estimate([1.0, 1.0, 1.0], [2.0, 2.0])
    assert rep.variance_raw == 0.0


def test_bootstrap_needs_two_each():
    with pytest.raises(DegenerateEnsemble):
        bootstrap_variance_estimate([1.0], [1.0, 2.0])


@given(
    st.integers(min_value=2, max_value=5),
    st.integers(min_value=1, max_value=6),
    st.floats(min_value=-50, max_value=50),
    st.floats(min_value=0.25, max_value=8),
    st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=120, deadline=None)
def test_shift_scale_equivariance(M, B, c, s, seed):
    vals = np.random.default_rng(seed).standard_normal((M, B))
    base = matched_variance_estimate(pm(vals))
    shifted = matched_variance_estimate(pm(vals + c))
    scaled = matched_variance_estimate(pm(vals * s))
    scale = max(1.0, abs(base.variance_raw))
    assert shifted.variance_raw == pytest.approx(base.variance_raw, abs=1e-9 * scale * max(1.0, c * c))
    assert scaled.variance_raw == pytest.approx(s * s * base.variance_raw, rel=1e-9)


def test_normal_quantile_against_scipy():
    ps = np.concatenate([
        np.linspace(1e-8, 0.02, 40),
        np.linspace(0.02, 0.98, 200),
        1 - np.linspace(1e-8, 0.02, 40),
    ])
    for p in ps:
        assert abs(normal_quantile(float(p)) - stats.norm.ppf(p)) <= 1e-9


def test_quantile_examples():
    assert normal_quantile(0.95) == pytest.approx(1.644854, abs=1e-6)
    lo, hi = confidence_interval(0.0, 1.0, 0.05)
    assert (lo, hi) == (pytest.approx(-1.959964, abs=1e-6), pytest.approx(1.959964, abs=1e-6))


def test_ci_examples():
    assert confidence_interval(5.0, 0.0, 0.1) == (5.0, 5.0)
    lo, hi = confidence_interval(18.0, 0.81, 0.10)
    assert lo == pytest.approx(16.5196, abs=2e-4)
    assert hi == pytest.approx(19.4804, abs=2e-4)


def test_ci_rejects_negative_variance():
    with pytest.raises(NegativeVariance):
        confidence_interval(0.0, -0.1, 0.1)


def test_ci_width_monotone_in_variance():
    widths = [np.diff(confidence_interval(0.0, v, 0.1))[0] for v in (0.0, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(widths, widths[1:]))


def test_neighbors_empty_and_degenerate_radius():
    data = Dataset(features=[[1.0, 2.0]], response=[0.0])
    x = TargetPoint([1.0, 2.0])
    assert generate_neighbors(x, data, 0, RandomStream(0)) == []
    nbs = generate_neighbors(x, data, 5, RandomStream(0))
    for nb in nbs:
        assert np.array_equal(nb.coordinates, x.coordinates)


def test_neighbors_on_sphere_and_angularly_uniform():
    data = Dataset(features=[[3.0, 0.0]], response=[1.0])
    x = TargetPoint([0.0, 0.0])
    nbs = generate_neighbors(x, data, 10_000, RandomStream(42))
    pts = np.array([nb.coordinates for nb in nbs])
    radii = np.sqrt((pts**2).sum(axis=1))
    assert np.all(np.abs(radii - 3.0) <= 1e-12 * 3.0)
    angles = np.arctan2(pts[:, 1], pts[:, 0])
    counts, _ = np.histogram(angles, bins=12, range=(-np.pi, np.pi))
    expected = len(pts) / 12
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < stats.chi2.ppf(0.999, df=11)


def _fitted_forest(seed=3, n=30, k=8, M=2, B=12):
    gen = np.random.default_rng(seed)
    data = Dataset(features=gen.random((n, 3)), response=gen.standard_normal(n))
    cfg = ForestConfig(k=k, M=M, B=B, mtry=2, nodesize=2)
    rs = RandomStream(seed)
    plan = sample_matched_groups(n, k, M, B, rs)
    return data, cfg, fit_forest(data, plan, cfg, rs), rs


def test_smoothed_with_zero_neighbors_equals_matched():
    data, cfg, forest, rs = _fitted_forest()
    x = TargetPoint([0.5, 0.5, 0.5])
    from forestvar import predict_matrix

    direct = matched_variance_estimate(predict_matrix(forest, x))
    smoothed = smoothed_variance_estimate(forest, x, data, 0, rs.split([8]))
    assert smoothed.variance_raw == direct.variance_raw
    assert smoothed.point == direct.point


def test_smoothed_is_average_of_per_point_raws():
    data, cfg, forest, rs = _fitted_forest(seed=9)
    x = TargetPoint([0.4, 0.2, 0.9])
    N = 6
    srs = rs.split([8])
    rep = smoothed_variance_estimate(forest, x, data, N, srs)
    from forestvar import predict_matrix

    nbs = generate_neighbors(x, data, N, srs.split([2]))
    raws = [matched_variance_estimate(predict_matrix(forest, p)).variance_raw
            for p in [x] + nbs]
    assert rep.variance_raw == pytest.approx(np.mean(raws), rel=1e-15)
    assert rep.mode == "smoothed"
    assert rep.point == matched_variance_estimate(predict_matrix(forest, x)).point


def test_smoothed_constant_response_is_zero():
    gen = np.random.default_rng(12)
    data = Dataset(features=gen.random((20, 2)), response=np.full(20, 1.25))
    cfg = ForestConfig(k=5, M=2, B=8, mtry=1, nodesize=1)
    rs = RandomStream(12)
    plan = sample_matched_groups(20, 5, 2, 8, rs)
    forest = fit_forest(data, plan, cfg, rs)
    rep = smoothed_variance_estimate(forest, [0.5, 0.5], data, 7, rs.split([8]))
    assert rep.variance_raw == 0.0


def test_smoothed_refit_knob_runs_and_differs():
    data, cfg, forest, rs = _fitted_forest(seed=15)
    x = TargetPoint([0.5, 0.5, 0.5])
    reuse = smoothed_variance_estimate(forest, x, data, 3, rs.split([8]))
    refit = smoothed_variance_estimate(forest, x, data, 3, rs.split([8]), refit=True)
    assert reuse.mode == refit.mode == "smoothed"
    assert reuse.variance_raw != refit.variance_raw  # fresh forests per neighbor


def test_report_serialization_roundtrip():
    rep = matched_variance_estimate(pm([[0.0], [2.0]]), alpha=0.2)
    blob = json.loads(rep.to_json())
    assert blob["variance_raw"] == 1.0
    assert blob["mode"] == "matched"
    assert blob["alpha"] == 0.2
    row = rep.csv_row()
    assert len(row) == len(rep.CSV_FIELDS)
    assert float(row[3]) == rep.variance_raw


def test_pipeline_reports_bitwise_reproducible():
    def run():
        data, cfg, forest, rs = _fitted_forest(seed=33)
        return smoothed_variance_estimate(
            forest, [0.1, 0.5, 0.9], data, 4, rs.split([8])
        )

    assert run() == run()
