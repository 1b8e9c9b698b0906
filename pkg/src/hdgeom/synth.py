"""Seeded synthetic ground-truth maps: parallel lanes, crossings and rectangular crosswalks.

Randomness comes from numpy's PCG64 bit generator seeded with the scenario
seed; Gaussian noise uses numpy's ziggurat normal sampler. Both are specified
algorithms, so fixtures are byte-stable across platforms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import (DEFAULT_EXTENT, Category, MapInstance, Polyline, VectorMap,
                       rigid_matrix)

MAX_INSTANCES = 50
LANE_LENGTH = 0.8
MARGIN = 0.02


class ScenarioKind(str, enum.Enum):
    PARALLEL = "parallel"
    CROSSING = "crossing"
    RECTANGLE = "rectangle"
    MIXED = "mixed"


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.PARALLEL
    n_instances: int = 6
    n_points: int = 20
    lane_gap: float = 0.1
    noise_sigma: float = 0.0
    seed: int = 0
    extent: tuple = DEFAULT_EXTENT

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if not 1 <= self.n_instances <= MAX_INSTANCES:
            raise ValidationError(f"n_instances must lie in [1, {MAX_INSTANCES}]")
        if self.n_points < 2:
            raise ValidationError("n_points must be at least 2")
        if not 0.0 < self.lane_gap < 0.5:
            raise ValidationError("lane_gap must lie in (0, 0.5)")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _inside(points) -> bool:
    return bool(np.all(points >= MARGIN) and np.all(points <= 1.0 - MARGIN))


def _lane_family(n, n_points, gap, angle, center, length=LANE_LENGTH):
    direction = np.array([math.cos(angle), math.sin(angle)])
    normal = np.array([-direction[1], direction[0]])
    s = np.linspace(-length / 2, length / 2, n_points)
    lanes = []
    for k in range(n):
        offset = (k - (n - 1) / 2) * gap
        lanes.append(np.asarray(center) + offset * normal + s[:, None] * direction)
    return lanes


def _lane_categories(n):
    if n < 3:
        return [Category.DIVIDER] * n
    return [Category.BOUNDARY] + [Category.DIVIDER] * (n - 2) + [Category.BOUNDARY]


def _check_packing(n, gap):
    if n * gap > 1.0:
        raise ValidationError(f"{n} lanes with gap {gap} do not fit the unit square")


def _placed_family(rng, n, n_points, gap, base_angle):
    """A lane family with a seeded tilt and shift, falling back to the untilted layout."""
    tilt = rng.uniform(-math.pi / 12, math.pi / 12)
    shift = rng.uniform(-0.05, 0.05, size=2)
    lanes = _lane_family(n, n_points, gap, base_angle + tilt, 0.5 + shift)
    if all(_inside(l) for l in lanes):
        return lanes
    return _lane_family(n, n_points, gap, base_angle, (0.5, 0.5))


def _parallel(cfg, rng):
    _check_packing(cfg.n_instances, cfg.lane_gap)
    lanes = _placed_family(rng, cfg.n_instances, cfg.n_points, cfg.lane_gap, 0.0)
    return [(l, False, c) for l, c in zip(lanes, _lane_categories(cfg.n_instances))]


def _crossing(cfg, rng, n=None):
    n = cfg.n_instances if n is None else n
    n_a = math.ceil(n / 2)
    n_b = n - n_a
    _check_packing(n_a, cfg.lane_gap)
    tilt = rng.uniform(-math.pi / 12, math.pi / 12)
    fam_a = _lane_family(n_a, cfg.n_points, cfg.lane_gap, tilt, (0.5, 0.5))
    fam_b = _lane_family(n_b, cfg.n_points, cfg.lane_gap, tilt + math.pi / 2, (0.5, 0.5))
    if not all(_inside(l) for l in fam_a + fam_b):
        fam_a = _lane_family(n_a, cfg.n_points, cfg.lane_gap, 0.0, (0.5, 0.5))
        fam_b = _lane_family(n_b, cfg.n_points, cfg.lane_gap, math.pi / 2, (0.5, 0.5))
    out = [(l, False, c) for l, c in zip(fam_a, _lane_categories(n_a))]
    out += [(l, False, c) for l, c in zip(fam_b, _lane_categories(n_b))]
    return out


def rectangle_points(width, height, n_points, angle=0.0, center=(0.5, 0.5)) -> np.ndarray:
    """Closed rectangle outline with every corner sampled when ``n_points >= 4``.

    Extra points go to the sides in proportion to side length (largest remainder).
    """
    corners = np.array([[-width / 2, -height / 2], [width / 2, -height / 2],
                        [width / 2, height / 2], [-width / 2, height / 2]])
    if n_points < 4:
        local = corners[:n_points]
    else:
        sides = np.array([width, height, width, height])
        extra = n_points - 4
        share = extra * sides / sides.sum()
        counts = np.floor(share).astype(int)
        for k in np.argsort(-(share - counts), kind="stable")[: extra - counts.sum()]:
            counts[k] += 1
        local = []
        for k in range(4):
            a, b = corners[k], corners[(k + 1) % 4]
            for t in np.arange(counts[k] + 1) / (counts[k] + 1):
                local.append(a + t * (b - a))
        local = np.array(local)
    return local @ rigid_matrix(angle).T + np.asarray(center)


def _rectangles(cfg, rng, n=None):
    n = cfg.n_instances if n is None else n
    grid = math.ceil(math.sqrt(n))
    cell = (1.0 - 2 * MARGIN) / grid
    out = []
    for k in range(n):
        row, col = divmod(k, grid)
        center = (MARGIN + (col + 0.5) * cell, MARGIN + (row + 0.5) * cell)
        width = cell * rng.uniform(0.5, 0.75)
        height = cell * rng.uniform(0.2, 0.35)
        angle = rng.uniform(-math.pi / 6, math.pi / 6)
        out.append((rectangle_points(width, height, cfg.n_points, angle, center), True,
                    Category.PED_CROSSING))
    return out


def _mixed(cfg, rng):
    n_rect = cfg.n_instances // 3
    lanes = _crossing(cfg, rng, cfg.n_instances - n_rect)
    return lanes + (_rectangles(cfg, rng, n_rect) if n_rect else [])


_BUILDERS = {
    ScenarioKind.PARALLEL: _parallel,
    ScenarioKind.CROSSING: _crossing,
    ScenarioKind.RECTANGLE: _rectangles,
    ScenarioKind.MIXED: _mixed,
}


def generate_scenario(cfg: ScenarioConfig) -> VectorMap:
    rng = make_rng(cfg.seed)
    parts = _BUILDERS[cfg.kind](cfg, rng)
    m = VectorMap([MapInstance(Polyline(p, closed), cat) for p, closed, cat in parts], cfg.extent)
    if cfg.noise_sigma > 0:
        m = perturb(m, cfg.noise_sigma, (cfg.seed + 1) % 2 ** 64)
    return m


def perturb(m: VectorMap, sigma: float, seed: int) -> VectorMap:
    """Add i.i.d. N(0, sigma^2) noise to every coordinate."""
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    if not len(m) or sigma == 0:
        return m
    noise = make_rng(seed).normal(0.0, sigma, size=m.coords().shape)
    return m.with_coords(m.coords() + noise)
