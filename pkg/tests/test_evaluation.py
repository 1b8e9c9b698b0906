import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from hdgeom.evaluation import (THRESHOLDS_M, _ap_from_matrix, average_precision, chamfer_distance,
                               map_score, meter_scale, resample)
from hdgeom.geometry import Category, Polyline, apply_rigid
from hdgeom.synth import ScenarioConfig, generate_scenario, perturb

EXTENT = (15.0, 30.0)


def _oracle(a, b, n=10_000):
    return oracles.continuous_chamfer(a.points, a.closed, b.points, b.closed, meter_scale(EXTENT), n)


def test_resample_spacing():
    pts = resample([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], n=5)
    assert np.allclose(pts, [[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1]])
    closed = resample([[0, 0], [1, 0], [1, 1], [0, 1]], closed=True, n=5)
    assert np.allclose(closed[0], closed[-1])


def test_identical_is_zero():
    a = Polyline([[0.1, 0.2], [0.4, 0.7], [0.8, 0.3]])
    assert chamfer_distance(a, a) == 0.0


def test_parallel_segments_against_oracle():
    a = Polyline([[0.2, 0.4], [0.8, 0.4]])
    b = Polyline([[0.2, 0.5], [0.8, 0.5]])
    got = chamfer_distance(a, b, EXTENT)
    assert got == pytest.approx(6.0, rel=1e-12)
    assert got == pytest.approx(_oracle(a, b), rel=0.01)


def test_degenerate_points():
    # both polylines collapse to single points 2 m apart along x (x scale 30 m)
    a = Polyline([[0.5, 0.5], [0.5, 0.5]])
    b = Polyline([[0.5 + 2 / 30, 0.5], [0.5 + 2 / 30, 0.5]])
    assert chamfer_distance(a, b, EXTENT) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_random_against_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    a = Polyline(rng.uniform(0, 1, (n, 2)), bool(rng.integers(2)))
    b = Polyline(rng.uniform(0, 1, (n, 2)), bool(rng.integers(2)))
    assert chamfer_distance(a, b, EXTENT) == pytest.approx(_oracle(a, b), rel=0.01)


@given(st.integers(0, 2 ** 31), st.floats(-math.pi, math.pi))
def test_chamfer_symmetric_and_invariant(seed, theta):
    rng = np.random.default_rng(seed)
    a = Polyline(rng.uniform(0.3, 0.7, (4, 2)))
    b = Polyline(rng.uniform(0.3, 0.7, (4, 2)), closed=True)
    d = chamfer_distance(a, b, EXTENT)
    assert abs(d - chamfer_distance(b, a, EXTENT)) <= 1e-12
    # isotropic extent so a rotation is rigid in meters too
    iso = (20.0, 20.0)
    ra, rb = apply_rigid(a, theta, (0.01, -0.02)), apply_rigid(b, theta, (0.01, -0.02))
    assert chamfer_distance(ra, rb, iso) == pytest.approx(chamfer_distance(a, b, iso), abs=1e-9)


def test_hand_computed_ap():
    dist = np.array([[0.2, 4.0], [0.3, 5.0], [6.0, 0.4]])
    scores = [0.9, 0.8, 0.7]
    # TP, FP (gt0 claimed, gt1 too far), TP
    assert _ap_from_matrix(scores, dist, 1.0) == pytest.approx(0.5 + 0.5 * 2 / 3, rel=1e-15)
    assert oracles.average_precision(scores, dist.tolist(), 1.0) == pytest.approx(0.5 + 0.5 * 2 / 3)


def test_empty_conventions():
    assert _ap_from_matrix([], np.zeros((0, 0)), 1.0) == 1.0
    assert _ap_from_matrix([0.5], np.zeros((1, 0)), 1.0) == 0.0
    assert _ap_from_matrix([], np.zeros((0, 2)), 1.0) == 0.0


def test_perfect_polyline_ap():
    gts = [Polyline([[0.1, 0.1], [0.9, 0.1]]), Polyline([[0.1, 0.5], [0.9, 0.5]])]
    preds = [(g, s) for g, s in zip(gts, (0.3, 0.6))]
    assert average_precision(preds, gts, 0.5, EXTENT) == 1.0


score_lists = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5)


@given(score_lists, st.integers(1, 4), st.integers(0, 2 ** 31))
def test_ap_matches_oracle(scores, n_gt, seed):
    dist = np.random.default_rng(seed).uniform(0.0, 3.0, (len(scores), n_gt))
    for t in THRESHOLDS_M:
        assert _ap_from_matrix(scores, dist, t) == pytest.approx(
            oracles.average_precision(scores, dist.tolist(), t), abs=1e-12)


@given(score_lists, st.integers(1, 4), st.integers(0, 2 ** 31))
def test_lowest_ranked_duplicate_never_hurts(scores, n_gt, seed):
    dist = np.random.default_rng(seed).uniform(0.0, 3.0, (len(scores), n_gt))
    base = _ap_from_matrix(scores, dist, 1.0)
    for i in range(len(scores)):
        more = np.vstack([dist, dist[i]])
        assert _ap_from_matrix(scores + [min(scores) / 2], more, 1.0) >= base - 1e-15


def test_map_score_perfect_and_csv():
    gt = generate_scenario(ScenarioConfig(kind="mixed", n_instances=6, n_points=10, seed=3))
    result = map_score(gt, gt)
    assert result.m_ap == 1.0
    rows = result.to_csv().strip().splitlines()
    assert rows[0] == "class,threshold,AP,mAP"
    assert len(rows) == 1 + 3 * len(THRESHOLDS_M)
    assert result.to_dict()["mAP"] == 1.0
    assert result.class_ap(Category.DIVIDER) == 1.0


@pytest.mark.parametrize("seed", range(6))
def test_threshold_monotone_on_scenes(seed):
    gt = generate_scenario(ScenarioConfig(kind="crossing", n_instances=6, n_points=10, seed=seed))
    pred = perturb(gt, 0.03, seed + 100)
    result = map_score(pred, gt)
    for rows in result.per_class.values():
        aps = [ap for _, ap in sorted(rows)]
        assert aps[0] <= aps[1] <= aps[2]


@given(score_lists, st.integers(1, 4), st.integers(0, 2 ** 31))
def test_threshold_monotone_any_matrix(scores, n_gt, seed):
    dist = np.random.default_rng(seed).uniform(0.0, 2.0, (len(scores), n_gt))
    aps = [_ap_from_matrix(scores, dist, t) for t in (0.5, 1.0, 1.5)]
    assert aps[0] <= aps[1] <= aps[2]
