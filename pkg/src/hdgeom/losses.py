"""Euclidean shape/relation losses, auxiliary losses and their coordinate gradients.

Every regression term is a sum of absolute differences between predicted and
ground-truth clues, so the gradient is a sign-weighted sum of clue Jacobians.
At exact kinks (a zero absolute-value argument) the subgradient 0 is used.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import (CATEGORIES, DEGENERATE_EPS, RelationClues, VectorMap,
                       angle_pair, displacement_vectors)
from .matching import MatchResult, aligned_gt

PROB_EPS = 1e-12
POWER_CHOICES = (1, 2, 4)


@dataclass(frozen=True)
class LossWeights:
    lambda_euc: float = 0.005
    lambda_shp: float = 1.0
    lambda_rel: float = 1.0
    beta_cls: float = 2.0
    beta_pts: float = 5.0
    beta_dir: float = 0.005
    beta_seg: float = 1.0
    beta_dep: float = 3.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    # "equal", or an int p in POWER_CHOICES for w = 1 - (min_dist / sqrt 2)^p
    weighting_mode: str | int = "equal"

    def __post_init__(self):
        for f in fields(self):
            if f.name == "weighting_mode":
                continue
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ValidationError(f"{f.name} must be a finite non-negative number, got {value!r}")
        if not 0.0 < self.focal_alpha < 1.0:
            raise ValidationError(f"focal_alpha must lie in (0, 1), got {self.focal_alpha}")
        mode = self.weighting_mode
        if mode != "equal" and (isinstance(mode, bool) or mode not in POWER_CHOICES):
            raise ValidationError(f"weighting_mode must be 'equal' or one of {POWER_CHOICES}")

    @classmethod
    def point_only(cls, beta_pts=5.0) -> "LossWeights":
        return cls(lambda_euc=0.0, beta_cls=0.0, beta_pts=beta_pts, beta_dir=0.0,
                   beta_seg=0.0, beta_dep=0.0)

    @classmethod
    def euclidean_only(cls, lambda_euc=1.0, lambda_shp=1.0, lambda_rel=1.0) -> "LossWeights":
        return cls(lambda_euc=lambda_euc, lambda_shp=lambda_shp, lambda_rel=lambda_rel,
                   beta_cls=0.0, beta_pts=0.0, beta_dir=0.0, beta_seg=0.0, beta_dep=0.0)

    def to_dict(self) -> dict:
        data = asdict(self)
        if self.weighting_mode != "equal":
            data["weighting_mode"] = {"power": self.weighting_mode}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "LossWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown weight fields: {sorted(unknown)}")
        data = dict(data)
        mode = data.get("weighting_mode", "equal")
        if isinstance(mode, dict):
            if set(mode) != {"power"}:
                raise ValidationError(f"bad weighting_mode {mode!r}")
            data["weighting_mode"] = mode["power"]
        elif isinstance(mode, str) and mode.lower() != "equal":
            raise ValidationError(f"bad weighting_mode {mode!r}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LossWeights":
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValidationError(f"bad weights JSON: {exc}") from exc

    @classmethod
    def load(cls, path) -> "LossWeights":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class LossBreakdown:
    shp: float = 0.0
    rel: float = 0.0
    euc: float = 0.0
    cls: float = 0.0
    pts: float = 0.0
    dir: float = 0.0
    seg: float = 0.0
    dep: float = 0.0
    total: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


# -- scalar building blocks -----------------------------------------------------


def angle_term(cos_a, sin_a, cos_b, sin_b) -> float:
    """L1 discrepancy of two angles given by their cosine and sine."""
    return abs(cos_a - cos_b) + abs(sin_a - sin_b)


def distance_weight(rc: RelationClues | np.ndarray, mode="equal") -> float:
    """Pair weight from the closest point distance (normalized frame)."""
    if mode == "equal":
        return 1.0
    distances = rc.distances if isinstance(rc, RelationClues) else np.asarray(rc)
    w = 1.0 - (float(np.min(distances)) / math.sqrt(2.0)) ** mode
    return min(max(w, 0.0), 1.0)


def focal_cls_loss(pred_probs, labels, w: LossWeights | None = None) -> float:
    w = w or LossWeights()
    probs = np.asarray(pred_probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if probs.size == 0:
        return 0.0
    if probs.ndim != 2 or len(probs) != len(labels):
        raise ValidationError(f"probabilities {probs.shape} do not fit labels {labels.shape}")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6) or np.any(probs < 0):
        raise ValidationError("probability rows must lie on the simplex")
    p = np.maximum(probs[np.arange(len(labels)), labels], PROB_EPS)
    return float(np.sum(-w.focal_alpha * (1.0 - p) ** w.focal_gamma * np.log(p)))


# -- vectorised terms with gradients ----------------------------------------------


def _norm(v):
    return np.hypot(v[..., 0], v[..., 1])


def _safe_unit(v, n):
    ok = n >= DEGENERATE_EPS
    return np.where(ok[..., None], v / np.where(ok, n, 1.0)[..., None], 0.0)


def _angle_pair_grad(a, b, g_cos, g_sin):
    """Pull upstream gradients on (cos, sin) of the a-b angle back onto a and b.

    ``g_cos``/``g_sin`` must already be zero on degenerate pairs.
    """
    na, nb = _norm(a), _norm(b)
    deg = (na < DEGENERATE_EPS) | (nb < DEGENERATE_EPS)
    inv = np.where(deg, 0.0, 1.0 / np.where(deg, 1.0, na * nb))
    inv_a2 = np.where(deg, 0.0, 1.0 / np.where(deg, 1.0, na * na))
    inv_b2 = np.where(deg, 0.0, 1.0 / np.where(deg, 1.0, nb * nb))
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    cos = dot * inv
    sin = np.abs(cross) * inv
    sgn = np.sign(cross)
    dcross_da = np.stack([b[..., 1], -b[..., 0]], axis=-1)
    dcross_db = np.stack([-a[..., 1], a[..., 0]], axis=-1)
    gc, gs = g_cos[..., None], g_sin[..., None]
    da = (gc * (b * inv[..., None] - (cos * inv_a2)[..., None] * a)
          + gs * ((sgn * inv)[..., None] * dcross_da - (sin * inv_a2)[..., None] * a))
    db = (gc * (a * inv[..., None] - (cos * inv_b2)[..., None] * b)
          + gs * ((sgn * inv)[..., None] * dcross_db - (sin * inv_b2)[..., None] * b))
    return da, db


def _vec_grad_to_points(dv):
    # v_u = p_{u+1} - p_u
    return np.roll(dv, 1, axis=-2) - dv


def _shape_terms(P, G, need_grad=False):
    vp, vg = displacement_vectors(P), displacement_vectors(G)
    dp, dg = _norm(vp), _norm(vg)
    vp_next = np.roll(vp, -1, axis=-2)
    cp, sp, degp = angle_pair(vp, vp_next)
    cg, sg, degg = angle_pair(vg, np.roll(vg, -1, axis=-2))
    keep = ~(degp | degg)
    loss = np.sum(np.abs(dp - dg)) + np.sum(np.where(keep, np.abs(cp - cg) + np.abs(sp - sg), 0.0))
    if not need_grad:
        return float(loss), None
    dv = np.sign(dp - dg)[..., None] * _safe_unit(vp, dp)
    da, db = _angle_pair_grad(vp, vp_next, np.where(keep, np.sign(cp - cg), 0.0),
                              np.where(keep, np.sign(sp - sg), 0.0))
    dv = dv + da + np.roll(db, 1, axis=-2)
    return float(loss), _vec_grad_to_points(dv)


@functools.lru_cache(maxsize=64)
def _pair_indices(k):
    ia, ib = np.triu_indices(k, 1)
    ia.setflags(write=False)
    ib.setflags(write=False)
    return ia, ib


def pair_weights(G, mode="equal") -> np.ndarray:
    """Weight of every unordered ground-truth pair (i < j), from gt distances."""
    ia, ib = _pair_indices(len(G))
    if mode == "equal" or not len(ia):
        return np.ones(len(ia))
    diff = G[ia][:, :, None, :] - G[ib][:, None, :, :]
    dmin = _norm(diff).min(axis=(1, 2))
    return np.clip(1.0 - (dmin / math.sqrt(2.0)) ** mode, 0.0, 1.0)


def _perp(u):
    # cross(a, b) == a . _perp(b)
    return np.stack([u[..., 1], -u[..., 0]], axis=-1)


def _cross_angles(ua, ub, deg_a, deg_b):
    """cos/sin/cross-sign matrices between all unit vectors of paired instances."""
    cos = ua @ np.swapaxes(ub, -1, -2)
    cross = ua @ np.swapaxes(_perp(ub), -1, -2)
    deg = deg_a[..., :, None] | deg_b[..., None, :]
    return np.where(deg, 1.0, cos), np.where(deg, 0.0, np.abs(cross)), np.sign(cross), deg


def _relation_terms(P, G, mode, need_grad=False):
    k = len(P)
    ia, ib = _pair_indices(k)
    if not len(ia):
        return 0.0, (np.zeros_like(P) if need_grad else None)
    w = pair_weights(G, mode)[:, None, None]
    vp, vg = displacement_vectors(P), displacement_vectors(G)
    np_, ng = _norm(vp), _norm(vg)
    up, ug = _safe_unit(vp, np_), _safe_unit(vg, ng)
    dp_vec, dg_vec = np_ < DEGENERATE_EPS, ng < DEGENERATE_EPS
    cp, sp, sgn, degp = _cross_angles(up[ia], up[ib], dp_vec[ia], dp_vec[ib])
    cg, sg, _, degg = _cross_angles(ug[ia], ug[ib], dg_vec[ia], dg_vec[ib])
    keep = ~(degp | degg)
    diff = P[ia][:, :, None, :] - P[ib][:, None, :, :]
    dp = _norm(diff)
    dg = _norm(G[ia][:, :, None, :] - G[ib][:, None, :, :])
    per = np.abs(dp - dg) + np.where(keep, np.abs(cp - cg) + np.abs(sp - sg), 0.0)
    loss = float(np.sum(w * per))
    if not need_grad:
        return loss, None
    grad = np.zeros_like(P)
    gd = (w * np.sign(dp - dg))[..., None] * _safe_unit(diff, dp)
    np.add.at(grad, ia, gd.sum(axis=2))
    np.add.at(grad, ib, -gd.sum(axis=1))
    # d cos/da = (b^ - cos a^)/|a|,  d sin/da = (sgn perp(b^) - sin a^)/|a|, symmetric for b
    gc = w * np.where(keep, np.sign(cp - cg), 0.0)
    gs_abs = w * np.where(keep, np.sign(sp - sg), 0.0)
    gs = gs_abs * sgn
    h = gc * cp + gs_abs * sp
    ua, ub = up[ia], up[ib]
    inv = np.where(dp_vec, 0.0, 1.0 / np.where(dp_vec, 1.0, np_))
    da = gc @ ub + gs @ _perp(ub) - ua * h.sum(axis=2)[..., None]
    gct, gst = np.swapaxes(gc, 1, 2), np.swapaxes(gs, 1, 2)
    db = gct @ ua - gst @ _perp(ua) - ub * h.sum(axis=1)[..., None]
    dv = np.zeros_like(P)
    np.add.at(dv, ia, da * inv[ia][..., None])
    np.add.at(dv, ib, db * inv[ib][..., None])
    return loss, grad + _vec_grad_to_points(dv)


def _point_terms(P, G, need_grad=False):
    loss = float(np.sum(np.abs(P - G)))
    return loss, (np.sign(P - G) if need_grad else None)


def _direction_terms(P, G, need_grad=False):
    vp, vg = displacement_vectors(P), displacement_vectors(G)
    cos, _, deg = angle_pair(vp, vg)
    loss = -float(np.sum(np.where(deg, 0.0, cos)))
    if not need_grad:
        return loss, None
    da, _ = _angle_pair_grad(vp, vg, np.where(deg, 0.0, -1.0), np.zeros(cos.shape))
    return loss, _vec_grad_to_points(da)


# -- map-level API ------------------------------------------------------------------


def _matched_arrays(pred: VectorMap, gt: VectorMap, match: MatchResult):
    if len(pred) and len(gt) and pred.n_points != gt.n_points:
        raise ValidationError(f"point count mismatch: pred {pred.n_points} vs gt {gt.n_points}")
    for i, j in match.pairs:
        if not (0 <= i < len(pred) and 0 <= j < len(gt)):
            raise ValidationError(f"match pair ({i}, {j}) out of range")
    rows = np.array([i for i, _ in match.pairs], dtype=int)
    if not len(rows):
        n_points = pred.n_points or gt.n_points or 0
        return rows, np.zeros((0, n_points, 2)), np.zeros((0, n_points, 2))
    return rows, pred.coords()[rows], aligned_gt(gt, match)


def shape_loss(pred: VectorMap, gt: VectorMap, match: MatchResult) -> float:
    _, P, G = _matched_arrays(pred, gt, match)
    return _shape_terms(P, G)[0]


def relation_loss(pred: VectorMap, gt: VectorMap, match: MatchResult, mode="equal") -> float:
    _, P, G = _matched_arrays(pred, gt, match)
    return _relation_terms(P, G, mode)[0]


def euclidean_loss(pred, gt, match, w: LossWeights | None = None):
    """Returns ``(shp, rel, euc)`` with euc = lambda_shp * shp + lambda_rel * rel."""
    w = w or LossWeights()
    _, P, G = _matched_arrays(pred, gt, match)
    shp = _shape_terms(P, G)[0]
    rel = _relation_terms(P, G, w.weighting_mode)[0]
    return shp, rel, w.lambda_shp * shp + w.lambda_rel * rel


def point_loss(pred, gt, match) -> float:
    _, P, G = _matched_arrays(pred, gt, match)
    return _point_terms(P, G)[0]


def edge_direction_loss(pred, gt, match) -> float:
    _, P, G = _matched_arrays(pred, gt, match)
    return _direction_terms(P, G)[0]


def default_probs(pred: VectorMap) -> np.ndarray:
    """Class probabilities implied by each prediction's category and score.

    The predicted category receives the score (1 when absent); the remaining
    mass is split evenly over the other classes.
    """
    n_cls = len(CATEGORIES)
    probs = np.zeros((len(pred), n_cls))
    for i, inst in enumerate(pred.instances):
        s = 1.0 if inst.score is None else inst.score
        probs[i, :] = (1.0 - s) / (n_cls - 1)
        probs[i, inst.category.index] = s
    return probs


def _evaluate(pred, gt, match, w: LossWeights, probs=None, need_grad=False):
    rows, P, G = _matched_arrays(pred, gt, match)
    shp, g_shp = _shape_terms(P, G, need_grad and w.lambda_euc * w.lambda_shp > 0)
    rel, g_rel = _relation_terms(P, G, w.weighting_mode, need_grad and w.lambda_euc * w.lambda_rel > 0)
    pts, g_pts = _point_terms(P, G, need_grad)
    dir_, g_dir = _direction_terms(P, G, need_grad)
    if probs is None:
        probs = default_probs(pred)
    probs = np.asarray(probs, dtype=float)
    labels = [gt.instances[j].category.index for _, j in match.pairs]
    cls = focal_cls_loss(probs[rows] if len(rows) else np.zeros((0, len(CATEGORIES))), labels, w)
    euc = w.lambda_shp * shp + w.lambda_rel * rel
    total = (w.lambda_euc * euc + w.beta_cls * cls + w.beta_pts * pts + w.beta_dir * dir_
             + w.beta_seg * 0.0 + w.beta_dep * 0.0)
    breakdown = LossBreakdown(shp=shp, rel=rel, euc=euc, cls=cls, pts=pts, dir=dir_, total=total)
    if not need_grad:
        return breakdown, None
    g = np.zeros_like(P)
    if g_shp is not None:
        g += (w.lambda_euc * w.lambda_shp) * g_shp
    if g_rel is not None:
        g += (w.lambda_euc * w.lambda_rel) * g_rel
    if w.beta_pts:
        g += w.beta_pts * g_pts
    if w.beta_dir:
        g += w.beta_dir * g_dir
    grad = np.zeros((len(pred), pred.n_points or 0, 2))
    if len(rows):
        grad[rows] = g
    bad = np.argwhere(~np.isfinite(grad))
    if len(bad):
        inst, point, _ = bad[0]
        raise NumericalError(f"non-finite gradient at instance {inst}, point {point}")
    return breakdown, grad


def total_loss(pred, gt, match, w: LossWeights | None = None, probs=None) -> LossBreakdown:
    """Full objective; ``probs`` (N_pred x C) defaults to :func:`default_probs`."""
    return _evaluate(pred, gt, match, w or LossWeights(), probs)[0]


def grad_total_loss(pred, gt, match, w: LossWeights | None = None, probs=None) -> np.ndarray:
    """d total / d predicted coordinates, shape (N_pred, n_points, 2).

    Unmatched predictions get zero rows. Classification does not depend on
    coordinates and contributes nothing.
    """
    return _evaluate(pred, gt, match, w or LossWeights(), probs, need_grad=True)[1]


def loss_and_grad(pred, gt, match, w: LossWeights | None = None, probs=None):
    return _evaluate(pred, gt, match, w or LossWeights(), probs, need_grad=True)


# -- kink detection for gradient checks ----------------------------------------------


def _angle_margin(cp, sp, cg, sg, length):
    """How far a point may move before |cos_p - cos_g| + |sin_p - sin_g| hits a kink.

    In angle space the kinks sit at theta_p = theta_g, pi - theta_g (sine term)
    and 0 or pi (the unsigned cross product). Moving one point by d turns a
    vector of the given length by at most asin(d / length), and a point can turn
    both vectors of a shape angle, hence the half angle.
    """
    tp, tg = np.arctan2(sp, cp), np.arctan2(sg, cg)
    gap = np.minimum.reduce([np.abs(tp - tg), np.abs(tp - (np.pi - tg)), tp, np.pi - tp])
    return np.maximum(length, DEGENERATE_EPS) * np.sin(np.minimum(gap, np.pi) / 2)


def kink_margins(pred, gt, match, w: LossWeights | None = None) -> np.ndarray:
    """Lower bound on how far each predicted point can move before some absolute
    value in the objective changes sign, shape (N_pred, n_points).

    Each term's argument is divided by a Lipschitz bound of that argument with
    respect to one point; points of unmatched predictions get ``inf``.
    """
    w = w or LossWeights()
    rows, P, G = _matched_arrays(pred, gt, match)
    margin = np.full(P.shape[:2], np.inf)
    k, n = P.shape[:2]
    if not k:
        return np.full((len(pred), pred.n_points or 0), np.inf)
    idx = np.arange(n)
    vp, vg = displacement_vectors(P), displacement_vectors(G)
    dp, dg = _norm(vp), _norm(vg)

    def scatter(values, inst, pts):
        np.minimum.at(margin, (inst, pts), values)

    if w.beta_pts:
        m = np.abs(P - G).min(axis=-1)
        margin = np.minimum(margin, m)
    inst_rows = np.repeat(np.arange(k), n).reshape(k, n)
    if w.lambda_euc * w.lambda_shp:
        m = np.abs(dp - dg)
        scatter(m, inst_rows, np.broadcast_to(idx, (k, n)))
        scatter(m, inst_rows, np.broadcast_to((idx + 1) % n, (k, n)))
        cp, sp, degp = angle_pair(vp, np.roll(vp, -1, axis=-2))
        cg, sg, degg = angle_pair(vg, np.roll(vg, -1, axis=-2))
        m = _angle_margin(cp, sp, cg, sg, np.minimum(dp, np.roll(dp, -1, axis=-1)))
        m = np.where(degp | degg, np.inf, m)
        for off in (0, 1, 2):
            scatter(m, inst_rows, np.broadcast_to((idx + off) % n, (k, n)))
    if w.lambda_euc * w.lambda_rel and k > 1:
        ia, ib = _pair_indices(k)
        pw = pair_weights(G, w.weighting_mode)
        live = pw > 0
        ia, ib = ia[live], ib[live]
        if len(ia):
            dpp = _norm(P[ia][:, :, None, :] - P[ib][:, None, :, :])
            dgg = _norm(G[ia][:, :, None, :] - G[ib][:, None, :, :])
            md = np.abs(dpp - dgg)
            cp, sp, degp = angle_pair(vp[ia][:, :, None, :], vp[ib][:, None, :, :])
            cg, sg, degg = angle_pair(vg[ia][:, :, None, :], vg[ib][:, None, :, :])
            ma = np.where(degp | degg, np.inf, _angle_margin(cp, sp, cg, sg, dp[ia][:, :, None]))
            mb = np.where(degp | degg, np.inf, _angle_margin(cp, sp, cg, sg, dp[ib][:, None, :]))
            for a_rows, pts, vals in ((ia, idx, md.min(axis=2)), (ib, idx, md.min(axis=1)),
                                      (ia, idx, ma.min(axis=2)), (ia, (idx + 1) % n, ma.min(axis=2)),
                                      (ib, idx, mb.min(axis=1)), (ib, (idx + 1) % n, mb.min(axis=1))):
                scatter(vals, np.repeat(a_rows, n).reshape(-1, n),
                        np.broadcast_to(pts, (len(a_rows), n)))
    full = np.full((len(pred), n), np.inf)
    full[rows] = margin
    return full
