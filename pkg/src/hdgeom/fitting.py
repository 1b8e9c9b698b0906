"""Plain gradient-descent polyline fitting and finite-difference gradient checks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .evaluation import map_score
from .geometry import VectorMap, angle_pair, displacement_vectors
from .losses import (LossBreakdown, LossWeights, kink_margins, loss_and_grad,
                     total_loss)
from .matching import MatchResult, aligned_gt, hungarian_match
from .synth import ScenarioConfig, ScenarioKind, generate_scenario, perturb

TRACE_COLUMNS = ("iter", "shp", "rel", "euc", "cls", "pts", "dir", "total", "mAP")


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 500
    step_size: float = 2e-5
    weights: LossWeights = field(default_factory=LossWeights)
    rematch_every: int = 10
    record_every: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not self.step_size > 0:
            raise ValidationError("step_size must be positive")
        if self.rematch_every < 0:
            raise ValidationError("rematch_every must be >= 0")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")


@dataclass
class FitTrace:
    iterations: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    m_ap: list = field(default_factory=list)

    def record(self, it: int, breakdown: LossBreakdown, m_ap: float):
        if self.iterations and it <= self.iterations[-1]:
            raise ValueError("trace iterations must increase")
        self.iterations.append(it)
        self.losses.append(breakdown)
        self.m_ap.append(m_ap)

    def column(self, name: str) -> np.ndarray:
        if name == "iter":
            return np.array(self.iterations)
        if name == "mAP":
            return np.array(self.m_ap)
        return np.array([getattr(b, name) for b in self.losses])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for it, b, m in zip(self.iterations, self.losses, self.m_ap):
            writer.writerow([it] + [repr(float(getattr(b, c))) for c in TRACE_COLUMNS[1:-1]]
                            + [repr(float(m))])
        return buf.getvalue()


def fit(init: VectorMap, gt: VectorMap, cfg: FitConfig | None = None):
    """Gradient descent on the total loss w.r.t. predicted coordinates.

    Matching is recomputed every ``rematch_every`` iterations (0: once). The
    trace holds iteration 0, every ``record_every``-th iteration and the final
    state. Raises NumericalError, carrying the partial trace, on a non-finite
    loss or gradient.
    """
    cfg = cfg or FitConfig()
    if len(init) and len(gt) and init.n_points != gt.n_points:
        raise ValidationError("init and gt disagree on point count")
    trace = FitTrace()
    current = init
    match = hungarian_match(current, gt)
    for it in range(cfg.iterations):
        if cfg.rematch_every and it and it % cfg.rematch_every == 0:
            match = hungarian_match(current, gt)
        try:
            breakdown, grad = loss_and_grad(current, gt, match, cfg.weights)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}", trace) from exc
        if not np.isfinite(breakdown.total):
            raise NumericalError(f"iteration {it}: non-finite loss", trace)
        if it % cfg.record_every == 0:
            trace.record(it, breakdown, map_score(current, gt).m_ap)
        if len(current):
            current = current.with_coords(current.coords() - cfg.step_size * grad)
    if cfg.rematch_every:
        match = hungarian_match(current, gt)
    final = total_loss(current, gt, match, cfg.weights)
    if not np.isfinite(final.total):
        raise NumericalError("final state: non-finite loss", trace)
    trace.record(cfg.iterations, final, map_score(current, gt).m_ap)
    return current, trace


def parallelism_residual(pred: VectorMap, gt: VectorMap, match: MatchResult | None = None,
                         tol: float = 1e-9) -> float:
    """Largest |sin| between predicted displacement vectors of instance pairs that
    are exactly parallel in the ground truth (every gt cross angle has sin < tol)."""
    match = match if match is not None else hungarian_match(pred, gt)
    if len(match.pairs) < 2:
        return 0.0
    rows = [i for i, _ in match.pairs]
    vp = displacement_vectors(pred.coords()[rows])
    vg = displacement_vectors(aligned_gt(gt, match))
    worst = 0.0
    for a in range(len(rows)):
        for b in range(a + 1, len(rows)):
            _, sg, _ = angle_pair(vg[a][:, None], vg[b][None, :])
            if sg.max() >= tol:
                continue
            _, sp, _ = angle_pair(vp[a][:, None], vp[b][None, :])
            worst = max(worst, float(sp.max()))
    return worst


# -- gradient checking ------------------------------------------------------------


@dataclass
class GradcheckReport:
    seed: int
    n_checked: int
    n_skipped: int
    max_rel_error: float
    max_abs_error_small: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def compare_gradients(analytic, numeric, rtol=1e-5, atol=1e-8, small=1e-3):
    """Per-entry pass mask plus the worst relative (large entries) and absolute
    (entries below ``small``) errors."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    large = scale >= small
    ok = np.where(large, err <= rtol * scale, err <= atol)
    max_rel = float(np.max(err[large] / scale[large])) if large.any() else 0.0
    max_abs = float(np.max(err[~large])) if (~large).any() else 0.0
    return ok, max_rel, max_abs


def check_scene(pred: VectorMap, gt: VectorMap, match: MatchResult, weights: LossWeights,
                h=1e-6, rtol=1e-5, kink_factor=10.0, seed=0) -> GradcheckReport:
    _, analytic = loss_and_grad(pred, gt, match, weights)
    x0 = pred.coords()
    numeric = central_difference(lambda x: total_loss(pred.with_coords(x), gt, match, weights).total,
                                 x0, h)
    near_kink = kink_margins(pred, gt, match, weights) < kink_factor * h
    checked = np.broadcast_to(~near_kink[..., None], x0.shape)
    ok, _, _ = compare_gradients(analytic, numeric, rtol)
    _, max_rel, max_abs = compare_gradients(analytic[checked], numeric[checked], rtol)
    return GradcheckReport(
        seed=seed,
        n_checked=int(checked.sum()),
        n_skipped=int((~checked).sum()),
        max_rel_error=max_rel,
        max_abs_error_small=max_abs,
        passed=bool(np.all(ok[checked])),
    )


def gradcheck_scene(seed: int, n_instances=3, n_points=6, sigma=0.02):
    """Seeded small scene for gradient checks: gt, perturbed prediction, match."""
    kinds = list(ScenarioKind)
    cfg = ScenarioConfig(kind=kinds[seed % len(kinds)], n_instances=n_instances,
                         n_points=n_points, lane_gap=0.15, seed=seed)
    gt = generate_scenario(cfg)
    pred = perturb(gt, sigma, seed + 7919)
    return pred, gt, hungarian_match(pred, gt)


def gradcheck(seed: int = 0, weights: LossWeights | None = None, h=1e-6, rtol=1e-5,
              **scene) -> GradcheckReport:
    """Finite-difference check of the analytic gradient on a generated scene.

    Points within ``10 * h`` of a kink of any absolute value in the objective
    are left out of the comparison.
    """
    pred, gt, match = gradcheck_scene(seed, **scene)
    return check_scene(pred, gt, match, weights or LossWeights(), h, rtol, seed=seed)
