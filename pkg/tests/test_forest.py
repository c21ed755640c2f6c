"""Forest fitting, prediction matrices, the point estimator, persistence."""

import numpy as np
import pytest

from forestvar import (
    Dataset,
    ForestConfig,
    MeanKernel,
    PredictionMatrix,
    RandomStream,
    fit_forest,
    fit_tree,
    load_forest,
    point_estimate,
    predict_matrix,
    predict_tree,
    sample_matched_groups,
    sample_subset_plan,
    save_forest,
)
from forestvar.forest import predict_all


def small_data(n=24, d=3, seed=0):
    gen = np.random.default_rng(seed)
    return Dataset(features=gen.random((n, d)), response=gen.standard_normal(n))


def test_shapes_and_disjoint_training_sets():
    data = Dataset(features=[[0.0], [1.0], [2.0], [3.0]], response=[1.0, 2.0, 3.0, 4.0])
    cfg = ForestConfig(k=2, M=2, B=1, mtry=1, nodesize=1)
    plan = sample_matched_groups(4, 2, 2, 1, RandomStream(1))
    f = fit_forest(data, plan, cfg, RandomStream(1))
    pm = predict_matrix(f, [1.2])
    assert pm.values.shape == (2, 1)
    assert set(plan.groups[0, 0]) & set(plan.groups[0, 1]) == set()


def test_full_pipeline_bitwise_determinism():
    data = small_data()
    cfg = ForestConfig(k=8, M=2, B=30, mtry=2, nodesize=2)

    def run():
        rs = RandomStream(77)
        plan = sample_matched_groups(data.n, 8, 2, 30, rs)
        f = fit_forest(data, plan, cfg, rs)
        return predict_matrix(f, [0.5, 0.5, 0.5])

    a, b = run(), run()
    assert np.array_equal(a.values, b.values)


def test_constant_response_constant_matrix():
    gen = np.random.default_rng(2)
    data = Dataset(features=gen.random((20, 2)), response=np.full(20, 3.5))
    cfg = ForestConfig(k=6, M=2, B=10, mtry=2, nodesize=1)
    plan = sample_matched_groups(20, 6, 2, 10, RandomStream(3))
    f = fit_forest(data, plan, cfg, RandomStream(3))
    pm = predict_matrix(f, [0.1, 0.9])
    assert np.all(pm.values == 3.5)


def test_per_tree_stream_contract():
    # tree (b, i) must equal a direct fit with stream split(rs, [1, b, i])
    data = small_data(seed=5)
    cfg = ForestConfig(k=6, M=2, B=4, mtry=2, nodesize=2)
    rs = RandomStream(11, (4, 2))  # non-trivial base path
    plan = sample_matched_groups(data.n, 6, 2, 4, rs)
    f = fit_forest(data, plan, cfg, rs)
    x = [0.3, 0.6, 0.9]
    pm = predict_matrix(f, x)
    for b in (0, 3):
        for i in (0, 1):
            t = fit_tree(data, plan.groups[b, i], cfg, rs.split([1, b, i]))
            assert predict_tree(t, x) == pm.values[i, b]


def test_point_estimate_arithmetic():
    pm = PredictionMatrix(values=[[1.0, 3.0], [5.0, 7.0]], target=np.zeros(1))
    assert point_estimate(pm) == 4.0
    single = PredictionMatrix(values=[[2.25]], target=np.zeros(1))
    assert point_estimate(single) == 2.25


def test_generic_kernel_forest_matches_direct_means():
    data = small_data(seed=7)
    cfg = ForestConfig(k=5, M=2, B=6, mtry=1, nodesize=1)
    plan = sample_matched_groups(data.n, 5, 2, 6, RandomStream(9))
    f = fit_forest(data, plan, cfg, RandomStream(9), kernel=MeanKernel())
    pm = predict_matrix(f, [0.0, 0.0, 0.0])
    for b in range(6):
        for i in range(2):
            assert pm.values[i, b] == data.response[plan.groups[b, i]].mean()


def _mean_kernel_points(n, k, M, B, n_rep, seed, mu=0.0):
    """Point estimates over fresh standard-normal datasets (mean kernel)."""
    cfg = ForestConfig(k=k, M=M, B=B, mtry=1, nodesize=1)
    pts = np.empty(n_rep)
    for r in range(n_rep):
        rep = RandomStream(seed).split([5, r])
        y = mu + rep.split([10]).generator().standard_normal(n)
        data = Dataset(features=np.zeros((n, 1)), response=y)
        if M >= 2:
            plan = sample_matched_groups(n, k, M, B, rep.split([11]))
        else:
            plan = sample_subset_plan(n, k, B, rep.split([11]))
        f = fit_forest(data, plan, cfg, rep.split([11]), kernel=MeanKernel())
        pts[r] = point_estimate(predict_matrix(f, [0.0]))
    return pts


def test_point_estimate_mc_mean_consistency():
    # MC mean of the ensemble point estimate equals mu within 3 SE
    pts = _mean_kernel_points(20, 5, 2, 10, 1500, seed=21, mu=3.0)
    se = pts.std(ddof=1) / np.sqrt(len(pts))
    assert abs(pts.mean() - 3.0) <= 3 * se


def test_matched_variance_law():
    # MC variance of the point estimate matches (1-1/B) sigma^2/n + sigma^2/(MBk)
    n, k, M, B, R = 16, 4, 2, 8, 4000
    pts = _mean_kernel_points(n, k, M, B, R, seed=22)
    truth = (1 - 1 / B) / n + 1 / (M * B * k)
    mc_var = pts.var(ddof=1)
    se = mc_var * np.sqrt(2 / (R - 1))
    assert abs(mc_var - truth) <= 3 * se


def test_matched_beats_unmatched_at_fixed_tree_count():
    # fixed M*B = 8: matched (M=2, B=4) has smaller MC variance than M=1, B=8
    R = 6000
    matched = _mean_kernel_points(10, 5, 2, 4, R, seed=23)
    unmatched = _mean_kernel_points(10, 5, 1, 8, R, seed=24)
    vm, vu = matched.var(ddof=1), unmatched.var(ddof=1)
    se = np.sqrt((vm**2 + vu**2) * 2 / (R - 1))
    assert vu - vm > 2 * se  # expected gap Var(U_n)/4 is ~4.5 sigma at this R


def test_forest_persistence_roundtrip(tmp_path):
    data = small_data(seed=31)
    cfg = ForestConfig(k=8, M=2, B=5, mtry=2, nodesize=2)
    rs = RandomStream(13)
    plan = sample_matched_groups(data.n, 8, 2, 5, rs)
    f = fit_forest(data, plan, cfg, rs)
    path = tmp_path / "forest.json"
    save_forest(f, path)
    g = load_forest(path)
    x = [0.2, 0.4, 0.8]
    assert np.array_equal(predict_matrix(f, x).values, predict_matrix(g, x).values)
    assert g.config == f.config
    assert np.array_equal(g.plan.groups, f.plan.groups)


def test_load_rejects_other_files(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "something-else"}')
    with pytest.raises(Exception):
        load_forest(p)


def test_predict_all_stacks_targets():
    data = small_data(seed=41)
    cfg = ForestConfig(k=6, M=2, B=7, mtry=2, nodesize=2)
    rs = RandomStream(15)
    plan = sample_matched_groups(data.n, 6, 2, 7, rs)
    f = fit_forest(data, plan, cfg, rs)
    xs = [[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]]
    mats = predict_all(f, xs)
    assert mats.shape == (2, 2, 7)
    for q, x in enumerate(xs):
        assert np.array_equal(mats[q], predict_matrix(f, x).values)
