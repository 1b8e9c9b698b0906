import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import random_map
from hdgeom.errors import ValidationError
from hdgeom.fitting import gradcheck
from hdgeom.geometry import Category, apply_rigid, make_map
from hdgeom.losses import (LossWeights, default_probs, distance_weight, edge_direction_loss,
                           euclidean_loss, focal_cls_loss, grad_total_loss, point_loss,
                           relation_loss, shape_loss, total_loss)
from hdgeom.matching import MatchResult, aligned_gt, hungarian_match
from hdgeom.synth import perturb


def _pair(seed, n=3, n_points=5, sigma=0.03):
    rng = np.random.default_rng(seed)
    gt = random_map(rng, n, n_points)
    pred = perturb(gt, sigma, seed + 1)
    return pred, gt, hungarian_match(pred, gt)


def test_defaults_match_reference_table():
    w = LossWeights()
    assert (w.focal_alpha, w.focal_gamma) == (0.25, 2.0)
    assert w.lambda_euc == 0.005
    assert (w.beta_cls, w.beta_pts, w.beta_dir, w.beta_seg, w.beta_dep) == (2, 5, 0.005, 1, 3)
    assert w.weighting_mode == "equal"


def test_weights_round_trip():
    w = LossWeights(weighting_mode=2, beta_pts=4.0)
    assert LossWeights.from_json(w.to_json()) == w
    assert '"power": 2' in w.to_json()


@pytest.mark.parametrize("bad", [{"beta_pts": -1.0}, {"focal_alpha": 1.0},
                                 {"weighting_mode": 3}, {"lambda_euc": float("nan")}])
def test_weights_validation(bad):
    with pytest.raises(ValidationError):
        LossWeights(**bad)


def test_weights_unknown_field():
    with pytest.raises(ValidationError):
        LossWeights.from_dict({"beta_typo": 1.0})


def test_zero_loss_at_gt():
    gt = random_map(np.random.default_rng(3), 3, 6)
    match = MatchResult.identity(3, 6)
    shp, rel, euc = euclidean_loss(gt, gt, match)
    assert shp == rel == euc == 0.0
    assert point_loss(gt, gt, match) == 0.0


def test_translation_gives_zero_euclidean_but_positive_points():
    gt = random_map(np.random.default_rng(4), 3, 5)
    moved = apply_rigid(gt, 0.0, (0.05, 0.0))
    match = MatchResult.identity(3, 5)
    assert euclidean_loss(moved, gt, match)[2] < 1e-12
    assert point_loss(moved, gt, match) > 0.0


def test_distance_weight_modes():
    far = np.array([[math.sqrt(2.0)]])
    assert distance_weight(far, "equal") == 1.0
    assert distance_weight(far, 2) == pytest.approx(0.0)
    assert distance_weight(np.array([[0.0]]), 4) == 1.0
    assert distance_weight(np.array([[5.0]]), 1) == 0.0


def test_focal_perfect_and_uniform():
    assert focal_cls_loss([[1.0, 0.0, 0.0]], [0]) == 0.0
    expected = -0.25 * (2.0 / 3.0) ** 2 * math.log(1.0 / 3.0)
    assert focal_cls_loss([[1 / 3, 1 / 3, 1 / 3]], [1]) == pytest.approx(expected)
    # clamp keeps a zero probability finite
    assert math.isfinite(focal_cls_loss([[0.0, 1.0, 0.0]], [0]))


def test_focal_rejects_bad_rows():
    with pytest.raises(ValidationError):
        focal_cls_loss([[0.5, 0.6, 0.0]], [0])


def test_direction_loss_reversed_line():
    gt = make_map([[[0.1, 0.5], [0.5, 0.5], [0.9, 0.5]]])
    rev = make_map([[[0.9, 0.5], [0.5, 0.5], [0.1, 0.5]]])
    match = MatchResult.identity(1, 3)
    assert edge_direction_loss(gt, gt, match) == pytest.approx(-3.0)
    assert edge_direction_loss(rev, gt, match) == pytest.approx(3.0)


def test_seg_and_dep_are_zero():
    pred, gt, match = _pair(0)
    b = total_loss(pred, gt, match)
    assert b.seg == 0.0 and b.dep == 0.0


def test_total_is_weighted_sum():
    pred, gt, match = _pair(1)
    w = LossWeights(weighting_mode=4)
    b = total_loss(pred, gt, match, w)
    expected = w.lambda_euc * b.euc + w.beta_cls * b.cls + w.beta_pts * b.pts + w.beta_dir * b.dir
    assert b.total == pytest.approx(expected, rel=1e-14)


def test_default_probs_rows():
    m = make_map(np.random.default_rng(0).uniform(size=(2, 3, 2)),
                 [Category.BOUNDARY, Category.DIVIDER], scores=[0.7, None])
    p = default_probs(m)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert p[0, Category.BOUNDARY.index] == 0.7 and p[1, Category.DIVIDER.index] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_losses_match_oracle(seed):
    pred, gt, match = _pair(seed)
    P = pred.coords()[[i for i, _ in match.pairs]]
    G = aligned_gt(gt, match)
    assert shape_loss(pred, gt, match) == pytest.approx(oracles.shape_loss(P, G), rel=1e-12, abs=1e-12)
    for mode in ("equal", 1, 2, 4):
        assert relation_loss(pred, gt, match, mode) == pytest.approx(
            oracles.relation_loss(P, G, mode), rel=1e-12, abs=1e-12)
    assert point_loss(pred, gt, match) == pytest.approx(oracles.point_loss(P, G), rel=1e-12)
    assert edge_direction_loss(pred, gt, match) == pytest.approx(oracles.direction_loss(P, G), rel=1e-12)


@given(st.floats(-math.pi, math.pi), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3),
       st.integers(0, 10_000))
def test_euclidean_loss_invariant(theta, tx, ty, seed):
    pred, gt, match = _pair(seed)
    base = euclidean_loss(pred, gt, match)[2]
    moved = euclidean_loss(apply_rigid(pred, theta, (tx, ty)), apply_rigid(gt, theta, (tx, ty)), match)[2]
    assert abs(base - moved) <= 1e-9 * max(1.0, abs(base))


@pytest.mark.parametrize("preset", ["default", "point_only", "euclidean_only", "power2"])
def test_gradient_against_finite_differences(preset):
    w = {"default": LossWeights(), "point_only": LossWeights.point_only(),
         "euclidean_only": LossWeights.euclidean_only(),
         "power2": LossWeights(weighting_mode=2)}[preset]
    for seed in range(3):
        report = gradcheck(seed, w)
        assert report.passed, report
        assert report.n_checked > 0


def test_gradient_shape_and_unmatched_rows():
    pred, gt, _ = _pair(2)
    match = MatchResult(((0, 0), (2, 2)), (tuple(range(5)),) * 2, (1,))
    g = grad_total_loss(pred, gt, match)
    assert g.shape == (3, 5, 2)
    assert np.all(g[1] == 0.0)


def test_degenerate_points_give_finite_gradient():
    pts = [[0.3, 0.3], [0.3, 0.3], [0.6, 0.4], [0.7, 0.7]]
    pred = make_map([pts])
    gt = make_map([[[0.3, 0.3], [0.4, 0.3], [0.6, 0.4], [0.7, 0.7]]])
    g = grad_total_loss(pred, gt, MatchResult.identity(1, 4))
    assert np.all(np.isfinite(g))


def test_empty_match():
    gt = random_map(np.random.default_rng(0), 2, 4)
    empty = MatchResult((), (), ())
    b = total_loss(gt, gt, empty)
    assert b.total == 0.0
    assert np.all(grad_total_loss(gt, gt, empty) == 0.0)
