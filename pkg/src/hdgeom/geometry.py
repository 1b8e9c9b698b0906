"""Map data types and the invariant geometric representation.

Coordinates live in the normalized BEV frame [0, 1]^2. A polyline of ``n_points``
points yields ``n_points`` displacement vectors: the last one wraps back to the
first point for open and closed polylines alike, so an open lane carries a long
closing edge in its representation.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

DEGENERATE_EPS = 1e-12
DEFAULT_EXTENT = (15.0, 30.0)
ROTATION_CENTER = (0.5, 0.5)


class Category(str, enum.Enum):
    DIVIDER = "divider"
    PED_CROSSING = "ped_crossing"
    BOUNDARY = "boundary"

    @property
    def index(self) -> int:
        return list(Category).index(self)


CATEGORIES = tuple(Category)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite point ({self.x}, {self.y})")


def _frozen_array(values, shape_tail=(2,)) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise ValidationError(f"expected array of shape (n, {shape_tail}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Polyline:
    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = self.points
        if isinstance(pts, (list, tuple)) and pts and isinstance(pts[0], Point2):
            pts = [(p.x, p.y) for p in pts]
        arr = _frozen_array(pts)
        if len(arr) < 2:
            raise ValidationError("a polyline needs at least 2 points")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("polyline contains non-finite coordinates")
        object.__setattr__(self, "points", arr)
        object.__setattr__(self, "closed", bool(self.closed))

    @property
    def n_points(self) -> int:
        return len(self.points)

    def point(self, u: int) -> Point2:
        return Point2(float(self.points[u, 0]), float(self.points[u, 1]))

    def with_points(self, points) -> "Polyline":
        return Polyline(points, self.closed)


@dataclass(frozen=True, eq=False)
class MapInstance:
    polyline: Polyline
    category: Category
    score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        if self.score is not None:
            score = float(self.score)
            if not 0.0 <= score <= 1.0:
                raise ValidationError(f"score {score} outside [0, 1]")
            object.__setattr__(self, "score", score)


@dataclass(frozen=True, eq=False)
class VectorMap:
    instances: tuple = ()
    bev_extent: tuple = DEFAULT_EXTENT

    def __post_init__(self):
        instances = tuple(self.instances)
        extent = tuple(float(v) for v in self.bev_extent)
        if len(extent) != 2 or min(extent) <= 0:
            raise ValidationError(f"bev_extent must be two positive half-ranges, got {extent}")
        sizes = {inst.polyline.n_points for inst in instances}
        if len(sizes) > 1:
            raise ValidationError(f"instances disagree on point count: {sorted(sizes)}")
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "bev_extent", extent)

    def __len__(self):
        return len(self.instances)

    @property
    def n_points(self) -> int | None:
        return self.instances[0].polyline.n_points if self.instances else None

    def coords(self) -> np.ndarray:
        """Stacked coordinates, shape (N, n_points, 2)."""
        if not self.instances:
            return np.zeros((0, 0, 2))
        return np.stack([inst.polyline.points for inst in self.instances])

    def with_coords(self, coords: np.ndarray) -> "VectorMap":
        coords = np.asarray(coords, dtype=float)
        instances = [
            MapInstance(inst.polyline.with_points(c), inst.category, inst.score)
            for inst, c in zip(self.instances, coords)
        ]
        return VectorMap(instances, self.bev_extent)

    def categories(self) -> list:
        return [inst.category for inst in self.instances]

    def allclose(self, other: "VectorMap", atol=0.0) -> bool:
        if len(self) != len(other) or self.bev_extent != other.bev_extent:
            return False
        for a, b in zip(self.instances, other.instances):
            if a.category != b.category or a.polyline.closed != b.polyline.closed:
                return False
            if a.score != b.score or a.polyline.points.shape != b.polyline.points.shape:
                return False
            if not np.allclose(a.polyline.points, b.polyline.points, rtol=0.0, atol=atol):
                return False
        return True


@dataclass(frozen=True, eq=False)
class ShapeClues:
    magnitudes: np.ndarray
    angle_cos: np.ndarray
    angle_sin: np.ndarray
    degenerate: np.ndarray = field(default=None)


@dataclass(frozen=True, eq=False)
class RelationClues:
    angle_cos: np.ndarray
    angle_sin: np.ndarray
    distances: np.ndarray
    degenerate: np.ndarray = field(default=None)


def _as_points(p) -> np.ndarray:
    return p.points if isinstance(p, Polyline) else np.asarray(p, dtype=float)


def displacement_vectors(p) -> np.ndarray:
    """Consecutive differences with wrap-around: row u is points[u+1] - points[u]."""
    pts = _as_points(p)
    return np.roll(pts, -1, axis=-2) - pts


def angle_pair(a: np.ndarray, b: np.ndarray):
    """Undirected angle between broadcastable vector arrays as (cos, sin, degenerate).

    The sine uses the unsigned cross product so angles lie in [0, pi]. Pairs
    where either vector is shorter than DEGENERATE_EPS get (1, 0) and a flag.
    """
    na = np.hypot(a[..., 0], a[..., 1])
    nb = np.hypot(b[..., 0], b[..., 1])
    deg = (na < DEGENERATE_EPS) | (nb < DEGENERATE_EPS)
    denom = np.where(deg, 1.0, na * nb)
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    cos = np.where(deg, 1.0, dot / denom)
    sin = np.where(deg, 0.0, np.abs(cross) / denom)
    return cos, sin, deg


def shape_clues(p) -> ShapeClues:
    v = displacement_vectors(p)
    cos, sin, deg = angle_pair(v, np.roll(v, -1, axis=-2))
    mags = np.hypot(v[..., 0], v[..., 1])
    return ShapeClues(mags, cos, sin, deg)


def relation_clues(a, b) -> RelationClues:
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape != pb.shape:
        raise ValidationError(f"polylines differ in shape: {pa.shape} vs {pb.shape}")
    va, vb = displacement_vectors(pa), displacement_vectors(pb)
    cos, sin, deg = angle_pair(va[:, None, :], vb[None, :, :])
    diff = pa[:, None, :] - pb[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    return RelationClues(cos, sin, dist, deg)


def rigid_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def transform_points(points: np.ndarray, theta: float, t: Sequence[float]) -> np.ndarray:
    center = np.asarray(ROTATION_CENTER)
    return (np.asarray(points) - center) @ rigid_matrix(theta).T + center + np.asarray(t, dtype=float)


def apply_rigid(m, theta: float, t: Sequence[float] = (0.0, 0.0)):
    """Rotate by ``theta`` about (0.5, 0.5), then translate by ``t``.

    Accepts a VectorMap, a Polyline or a raw (..., 2) coordinate array.
    """
    if isinstance(m, VectorMap):
        if not m.instances:
            return m
        return m.with_coords(transform_points(m.coords(), theta, t))
    if isinstance(m, Polyline):
        return m.with_points(transform_points(m.points, theta, t))
    return transform_points(m, theta, t)


# -- JSON ---------------------------------------------------------------------


def map_to_dict(m: VectorMap) -> dict:
    instances = []
    for inst in m.instances:
        rec = {
            "category": inst.category.value,
            "closed": inst.polyline.closed,
            "points": [[float(x), float(y)] for x, y in inst.polyline.points],
        }
        if inst.score is not None:
            rec["score"] = inst.score
        instances.append(rec)
    return {"bev_extent": list(m.bev_extent), "instances": instances}


def map_from_dict(data: dict) -> VectorMap:
    try:
        extent = data.get("bev_extent", DEFAULT_EXTENT)
        instances = [
            MapInstance(
                Polyline(rec["points"], rec.get("closed", False)),
                Category(rec["category"]),
                rec.get("score"),
            )
            for rec in data.get("instances", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad map record: {exc}") from exc
    return VectorMap(instances, extent)


def dumps_map(m: VectorMap) -> str:
    # json emits repr floats, which round-trip at 17 significant digits
    return json.dumps(map_to_dict(m), indent=1) + "\n"


def loads_map(text: str) -> VectorMap:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    return map_from_dict(data)


def load_map(path) -> VectorMap:
    with open(path, encoding="utf-8") as fh:
        return loads_map(fh.read())


def save_map(m: VectorMap, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_map(m))


def make_map(polylines: Iterable, categories=None, closed=False, scores=None,
             extent=DEFAULT_EXTENT) -> VectorMap:
    """Convenience constructor from raw point lists."""
    polylines = list(polylines)
    n = len(polylines)
    categories = categories or [Category.DIVIDER] * n
    closed = closed if isinstance(closed, (list, tuple)) else [closed] * n
    scores = scores or [None] * n
    return VectorMap(
        [MapInstance(Polyline(p, c), cat, s)
         for p, c, cat, s in zip(polylines, closed, categories, scores)],
        extent,
    )
