"""Point-order-agnostic assignment of predicted to ground-truth instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .geometry import MapInstance, Polyline, VectorMap

CLASS_PENALTY = 1e6


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple = ()
    orderings: tuple = ()
    unmatched_preds: tuple = ()

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "orderings": [list(o) for o in self.orderings],
            "unmatched_preds": list(self.unmatched_preds),
        }

    @classmethod
    def identity(cls, n: int, n_points: int) -> "MatchResult":
        order = tuple(range(n_points))
        return cls(tuple((i, i) for i in range(n)), (order,) * n, ())


def point_order_variants(p: Polyline | int, closed: bool | None = None) -> list:
    """Equivalent point orderings, identity first, duplicates removed.

    Closed polylines admit every cyclic shift of the sequence and of its
    reversal; open polylines only the identity and the full reversal.
    """
    if isinstance(p, Polyline):
        n, closed = p.n_points, p.closed
    else:
        n = int(p)
    forward = list(range(n))
    backward = forward[::-1]
    if closed:
        candidates = [tuple(forward[k:] + forward[:k]) for k in range(n)]
        candidates += [tuple(backward[k:] + backward[:k]) for k in range(n)]
    else:
        candidates = [tuple(forward), tuple(backward)]
    return list(dict.fromkeys(candidates))


def _check_same_size(a: MapInstance, b: MapInstance):
    if a.polyline.n_points != b.polyline.n_points:
        raise ValidationError(
            f"point count mismatch: {a.polyline.n_points} vs {b.polyline.n_points}")


def instance_cost(pred: MapInstance, gt: MapInstance):
    """Minimum L1 point distance over the gt's equivalent orderings.

    Returns ``(cost, ordering)``; a category mismatch adds CLASS_PENALTY.
    """
    _check_same_size(pred, gt)
    variants = point_order_variants(gt.polyline)
    aligned = gt.polyline.points[np.array(variants)]
    costs = np.abs(aligned - pred.polyline.points[None]).sum(axis=(1, 2))
    best = int(np.argmin(costs))
    cost = float(costs[best])
    if pred.category != gt.category:
        cost += CLASS_PENALTY
    return cost, variants[best]


def cost_matrix(pred: VectorMap, gt: VectorMap):
    costs = np.zeros((len(pred), len(gt)))
    orders = [[None] * len(gt) for _ in range(len(pred))]
    for i, p in enumerate(pred.instances):
        for j, g in enumerate(gt.instances):
            costs[i, j], orders[i][j] = instance_cost(p, g)
    return costs, orders


def hungarian_match(pred: VectorMap, gt: VectorMap) -> MatchResult:
    """Minimum-cost one-to-one assignment; surplus predictions stay unmatched."""
    if not len(pred) or not len(gt):
        return MatchResult((), (), tuple(range(len(pred))))
    costs, orders = cost_matrix(pred, gt)
    rows, cols = linear_sum_assignment(costs)
    pairs = tuple(sorted(zip(rows.tolist(), cols.tolist())))
    matched = {r for r, _ in pairs}
    return MatchResult(
        pairs=pairs,
        orderings=tuple(orders[r][c] for r, c in pairs),
        unmatched_preds=tuple(i for i in range(len(pred)) if i not in matched),
    )


def matched_cost(pred: VectorMap, gt: VectorMap, match: MatchResult) -> float:
    total = 0.0
    for (i, j) in match.pairs:
        total += instance_cost(pred.instances[i], gt.instances[j])[0]
    return total


def aligned_gt(gt: VectorMap, match: MatchResult) -> np.ndarray:
    """Ground-truth coordinates of matched pairs reordered by each pair's ordering."""
    if not match.pairs:
        return np.zeros((0, gt.n_points or 0, 2))
    return np.stack([
        gt.instances[j].polyline.points[list(order)]
        for (_, j), order in zip(match.pairs, match.orderings)
    ])
