import itertools
import json
import warnings

import numpy as np
import pytest

from dolroute.datagen import (
    ContextRanges, DatasetSample, FleetTemplate, RawContextRecord, assemble_dataset, dataset_csv,
    design_matrix, fit_weights, generate_contexts, nonneg_ridge, nonneg_ridge_many, read_jsonl,
    rollout_raw_data, scenario_from_context, selection_plan, write_jsonl,
)
from dolroute.simulator import default_map, generate_candidate_routes, partition_graph
from dolroute.submodular import BasisFamily, CoverageObjective
from conftest import random_instance


@pytest.fixture(scope="module")
def world():
    g = default_map()
    routes = generate_candidate_routes(g, 15, 0.85, np.random.default_rng(0))
    part = partition_graph(g, 9)
    obj = CoverageObjective(routes, part, BasisFamily((0.001, 0.5, 1.0)))
    return g, routes, part, obj


def test_generate_contexts_ranges():
    r = ContextRanges(radius=(120.0, 180.0))
    assert generate_contexts(0, 4, r, np.random.default_rng(0)) == []
    zs = generate_contexts(200, 4, r, np.random.default_rng(0))
    Z = np.array(zs)
    assert Z.shape == (200, 15)
    radii = Z[:, 2:12:3]
    assert np.all((radii >= 120) & (radii <= 180))
    assert np.all((Z[:, -1] >= 0) & (Z[:, -1] < 360))
    assert np.all(Z[:, -3] > 0) and np.all(Z[:, -2] > 0)
    other = np.array(generate_contexts(200, 4, r, np.random.default_rng(1)))
    assert not np.any(np.all(np.isclose(Z[:, None, :], other[None, :, :]), axis=2))
    again = np.array(generate_contexts(200, 4, r, np.random.default_rng(0)))
    assert np.array_equal(Z, again)
    with pytest.raises(ValueError):
        ContextRanges(a=(3.0, 3.0))


def test_scenario_from_context(world):
    g, routes, part, _ = world
    z = generate_contexts(1, 3, ContextRanges.for_graph(g), np.random.default_rng(2))[0]
    scn = scenario_from_context(z, g, routes, part, FleetTemplate())
    assert len(scn.uavs) == 3
    assert scn.uavs[1].center == (z[3], z[4]) and scn.uavs[1].radius == z[5]
    assert (scn.wind.a, scn.wind.b) == (z[-3], z[-2])
    with pytest.raises(ValueError):
        scenario_from_context(np.zeros(7), g, routes, part)


def test_selection_plan_shape():
    plan = selection_plan(15, 3, np.random.default_rng(0))
    assert len(plan) == len(set(plan)) >= 27
    assert all(len(s) in (1, 2, 3) for s in plan)
    assert [(t,) for t in range(15)] == plan[:15]


def test_rollout_raw_data_monotone_and_empty(world):
    g, routes, part, _ = world
    z = generate_contexts(1, 8, ContextRanges.for_graph(g), np.random.default_rng(3))[0]
    plan = [(), (0,), (0, 1), (0, 1, 2), tuple(range(15))]
    rec = rollout_raw_data(z, plan, g, routes, part, FleetTemplate(), 20, seed=4)
    vals = [v for _, v in rec.evaluations]
    assert vals[0] == 0.0
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    again = rollout_raw_data(z, plan, g, routes, part, FleetTemplate(), 20, seed=4)
    assert again.evaluations == rec.evaluations
    back = RawContextRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert back.evaluations == rec.evaluations
    with pytest.warns(UserWarning):
        rollout_raw_data(z, plan, g, routes, part, FleetTemplate(), 1, seed=4, dim_w=27)


def test_rollout_variance_shrinks_with_repeats(world):
    g, routes, part, _ = world
    z = generate_contexts(1, 10, ContextRanges.for_graph(g), np.random.default_rng(5))[0]
    plan = [(0, 3, 7)]
    one = [rollout_raw_data(z, plan, g, routes, part, FleetTemplate(), 1, seed=s).evaluations[0][1] for s in range(300)]
    many = [rollout_raw_data(z, plan, g, routes, part, FleetTemplate(), 25, seed=1000 + s).evaluations[0][1]
            for s in range(60)]
    ratio = np.var(many, ddof=1) / np.var(one, ddof=1)
    # expect 1/25; allow for sampling error of the variance estimates
    assert 0.01 < ratio < 0.1


def _planted_design(rng, sizes=(1, 2, 3)):
    while True:
        obj, _ = random_instance(rng, n_routes=6, n_nodes=12, n_parts=3)
        sels = [s for k in sizes for s in itertools.combinations(range(6), k)]
        X = design_matrix(obj, sels)
        if np.linalg.matrix_rank(X) == X.shape[1]:
            return X


def test_ridge_large_xi_shrinks_to_zero(rng):
    # the minimizer is about X'y / xi, so the bound needs |X'y| below 1e3
    for _ in range(5):
        X = _planted_design(rng, sizes=(1, 2))
        y = X @ rng.uniform(0, 1, size=X.shape[1])
        res = nonneg_ridge(X, y, 1e9)
        assert res.converged and np.max(np.abs(res.w)) < 1e-6
        exact = np.linalg.solve(X.T @ X + 1e9 * np.eye(X.shape[1]), X.T @ y)
        assert np.allclose(res.w, np.maximum(exact, 0), rtol=1e-6, atol=1e-15)


def test_ridge_planted_recovery(rng):
    for _ in range(10):
        X = _planted_design(rng)
        w_star = rng.uniform(0, 2, size=X.shape[1])
        w_star[rng.random(X.shape[1]) < 0.3] = 0.0
        res = nonneg_ridge(X, X @ w_star, 1e-8)
        assert res.converged
        assert np.max(np.abs(res.w - w_star)) <= 1e-4


def test_ridge_descent_and_start(rng):
    X = rng.normal(size=(30, 8))
    y = rng.normal(size=30)
    res = nonneg_ridge(X, y, 1e-3)
    tr = res.objective_trace
    assert tr[0] == pytest.approx(y @ y)
    assert np.all(np.diff(tr) <= 1e-12 * tr[0])
    assert res.residual <= tr[0]
    assert np.all(res.w >= 0)
    # KKT: zero gradient on the support, non-negative gradient off it
    g = 2 * (X.T @ (X @ res.w - y) + 1e-3 * res.w)
    assert np.all(np.abs(g[res.w > 0]) < 1e-7)
    assert np.all(g[res.w == 0] > -1e-7)


def test_ridge_batch_matches_single(rng):
    X = rng.uniform(0, 2, size=(25, 6))
    Y = rng.uniform(0, 5, size=(25, 4))
    many = nonneg_ridge_many(X, Y, 1e-4)
    for j in range(4):
        one = nonneg_ridge(X, Y[:, j], 1e-4)
        assert np.allclose(one.w, many[j].w, atol=1e-12)


def test_fit_weights_warns_when_rank_deficient(world):
    _, _, _, obj = world
    rec = RawContextRecord(np.zeros(6), [((0,), 1.0), ((1,), 2.0)], 1)
    with pytest.warns(UserWarning, match="rank"):
        s = fit_weights(rec, obj)
    assert s.w.shape == (9, 3) and np.all(s.w >= 0)
    sels = selection_plan(len(obj.ground), 3, np.random.default_rng(0), pair_budget=105, subset_budget=200)
    X = design_matrix(obj, sels)
    rec = RawContextRecord(np.zeros(6), [(s, float(v)) for s, v in zip(sels, X @ np.ones(27))], 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit_weights(rec, obj)
    rank_warned = any("rank" in str(c.message) for c in caught)
    assert rank_warned == (np.linalg.matrix_rank(X) < 27)


def test_assemble_dataset(world, tmp_path):
    g, routes, part, obj = world
    assert assemble_dataset([], obj) == ([], [], [])
    zs = generate_contexts(10, 4, ContextRanges.for_graph(g), np.random.default_rng(6))
    plan = selection_plan(15, 3, np.random.default_rng(7))
    recs = [rollout_raw_data(z, plan, g, routes, part, FleetTemplate(), 2, seed=k) for k, z in enumerate(zs)]
    samples, tr, te = assemble_dataset(recs, obj, seed=3)
    assert len(tr) == 8 and len(te) == 2 and sorted(tr + te) == list(range(10))
    assert all(np.all(s.w >= 0) and s.fit_residual >= 0 for s in samples)
    again = assemble_dataset(recs, obj, seed=3)
    assert all(np.array_equal(a.w, b.w) for a, b in zip(samples, again[0]))
    path = tmp_path / "d.jsonl"
    write_jsonl(path, samples)
    back = read_jsonl(path)
    assert all(np.array_equal(a.w, b.w) and np.array_equal(a.z, b.z) for a, b in zip(samples, back))
    csv = dataset_csv(samples).splitlines()
    assert csv[0].startswith("z0,") and csv[0].endswith("w26") and len(csv) == 11
    assert DatasetSample.from_dict(samples[0].to_dict()).fit_residual == samples[0].fit_residual
