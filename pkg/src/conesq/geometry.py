"""Ambient geometry: the closed set E, distance to E, balls in E, cones.

E is either a finite point cloud (exact distance = min over atoms) or one of
four analytic shapes with closed-form distance: an axis-aligned hyperplane
slab, a segment, a circle, and the finite-level four-corner Cantor set.
Ambient dimension is capped at 4; every phenomenon we test appears by n = 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core

MAX_DIM = 4


def as_point(x, dim=None):
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"point must be a flat coordinate vector, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise ValueError(f"dimension mismatch: point has {p.shape[0]} coords, expected {dim}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    return p


class ClosedSet:
    """Base: a closed E in R^n with an exact distance function and a sampler."""

    dim: int

    def distance(self, pts):
        """Distance d(x, E) for a batch pts (S, n); also accepts one point."""
        raise NotImplementedError

    def sample(self, k, rng):
        """k points on E (used for quadrature clouds and kernel checks)."""
        raise NotImplementedError

    def distance_one(self, x):
        return float(self.distance(as_point(x, self.dim)[None, :])[0])


@dataclass(frozen=True)
class PointCloud(ClosedSet):
    points: np.ndarray  # (N, n), pairwise distinct

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("PointCloud needs a nonempty (N, n) array")
        if pts.shape[1] > MAX_DIM:
            raise ValueError(f"ambient dimension capped at {MAX_DIM}")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return self.points.shape[1]

    def distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if pts.shape[1] != self.dim:
            raise ValueError("dimension mismatch")
        return _core.min_dist(pts, self.points)

    def sample(self, k, rng):
        idx = rng.integers(0, self.points.shape[0], size=k)
        return self.points[idx]


@dataclass(frozen=True)
class Slab(ClosedSet):
    """Axis-aligned hyperplane {x_axis = offset} thickened by half_width.

    half_width = 0 gives the hyperplane itself (the x-axis in R^2 is
    Slab(dim=2, axis=1, offset=0)). extent bounds the sampler only; the set
    is unbounded.
    """

    dim: int
    axis: int
    offset: float = 0.0
    half_width: float = 0.0
    extent: float = 1.0

    def __post_init__(self):
        if not (0 <= self.axis < self.dim <= MAX_DIM):
            raise ValueError("bad axis/dim")
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")

    def distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if pts.shape[1] != self.dim:
            raise ValueError("dimension mismatch")
        return np.maximum(np.abs(pts[:, self.axis] - self.offset) - self.half_width, 0.0)

    def sample(self, k, rng):
        out = rng.uniform(-self.extent, self.extent, size=(k, self.dim))
        if self.half_width == 0.0:
            out[:, self.axis] = self.offset
        else:
            out[:, self.axis] = self.offset + rng.uniform(-self.half_width, self.half_width, size=k)
        return out


@dataclass(frozen=True)
class Segment(ClosedSet):
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = as_point(self.a)
        b = as_point(self.b, a.shape[0])
        if a.shape[0] > MAX_DIM:
            raise ValueError(f"ambient dimension capped at {MAX_DIM}")
        if np.array_equal(a, b):
            raise ValueError("degenerate segment")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.a.shape[0]

    def distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if pts.shape[1] != self.dim:
            raise ValueError("dimension mismatch")
        ab = self.b - self.a
        t = ((pts - self.a) @ ab) / float(ab @ ab)
        t = np.clip(t, 0.0, 1.0)
        proj = self.a + t[:, None] * ab
        return np.sqrt(((pts - proj) ** 2).sum(-1))

    def sample(self, k, rng):
        t = rng.uniform(0.0, 1.0, size=k)
        return self.a + t[:, None] * (self.b - self.a)


@dataclass(frozen=True)
class Circle(ClosedSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_point(self.center, 2)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return 2

    def distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if pts.shape[1] != 2:
            raise ValueError("dimension mismatch")
        return np.abs(np.sqrt(((pts - self.center) ** 2).sum(-1)) - self.radius)

    def sample(self, k, rng):
        th = rng.uniform(0.0, 2.0 * math.pi, size=k)
        return self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)


@dataclass(frozen=True)
class CantorDust(ClosedSet):
    """Level-L four-corner Cantor set: union of 4^L closed squares of side 4^-L."""

    level: int
    corners: np.ndarray = field(init=False)  # (4^L, 2) lower-left corners
    side: float = field(init=False)

    def __post_init__(self):
        if not (0 <= self.level <= 6):
            raise ValueError("level must be in [0, 6]")
        corners = np.zeros((1, 2))
        side = 1.0
        for _ in range(self.level):
            shift = 0.75 * side
            corners = np.concatenate(
                [
                    corners,
                    corners + [shift, 0.0],
                    corners + [0.0, shift],
                    corners + [shift, shift],
                ]
            )
            side /= 4.0
        order = np.lexsort((corners[:, 0], corners[:, 1]))
        object.__setattr__(self, "corners", corners[order])
        object.__setattr__(self, "side", side)

    @property
    def dim(self):
        return 2

    def distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if pts.shape[1] != 2:
            raise ValueError("dimension mismatch")
        out = np.empty(pts.shape[0])
        step = max(1, 2 ** 22 // max(1, self.corners.shape[0]))
        for lo in range(0, pts.shape[0], step):
            hi = min(lo + step, pts.shape[0])
            dx = pts[lo:hi, None, 0] - self.corners[None, :, 0]
            dy = pts[lo:hi, None, 1] - self.corners[None, :, 1]
            ex = np.maximum(np.maximum(-dx, dx - self.side), 0.0)
            ey = np.maximum(np.maximum(-dy, dy - self.side), 0.0)
            out[lo:hi] = np.sqrt(ex ** 2 + ey ** 2).min(axis=1)
        return out

    def sample(self, k, rng):
        idx = rng.integers(0, self.corners.shape[0], size=k)
        return self.corners[idx] + rng.uniform(0.0, self.side, size=(k, 2))


@dataclass(frozen=True)
class BallSpec:
    """A ball; restricted=True means the ball in E, i.e. B intersected with E."""

    center: np.ndarray
    radius: float
    closed: bool = True
    restricted: bool = False

    def __post_init__(self):
        c = as_point(self.center)
        if not (self.radius > 0):
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.center.shape[0]

    def contains(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        d = np.sqrt(((pts - self.center) ** 2).sum(-1))
        return d <= self.radius if self.closed else d < self.radius

    def dilate(self, factor):
        return BallSpec(self.center, factor * self.radius, self.closed, self.restricted)


@dataclass(frozen=True)
class ConeSpec:
    """Truncated cone at apex y in E: |x - y| < 2 d(x,E), lower < d(x,E) <= upper."""

    apex: np.ndarray
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        a = as_point(self.apex)
        if self.lower < 0:
            raise ValueError("lower truncation must be >= 0")
        if not (self.lower < self.upper):
            raise ValueError("need lower < upper")
        object.__setattr__(self, "apex", a)


def distance_to_set(x, E: ClosedSet):
    """d(x, E); exact min over atoms for clouds, closed form for analytic E."""
    return E.distance_one(x)


def cone_contains(c: ConeSpec, x, E: ClosedSet):
    """Strict cone membership; ties |x-apex| = 2 d(x,E) resolve to False.

    Accepts a batch (S, n) and returns a bool mask; a single point returns
    a bool.
    """
    pts = np.asarray(x, dtype=np.float64)
    one = pts.ndim == 1
    pts = np.atleast_2d(pts)
    d = E.distance(pts)
    rad = np.sqrt(((pts - c.apex) ** 2).sum(-1))
    ok = (rad < 2.0 * d) & (d > c.lower) & (d <= c.upper)
    return bool(ok[0]) if one else ok


def comparable_distance_check(y, z, x, E: ClosedSet):
    """Ratio |x-z| / (|x-y| + |y-z|) for x in the cone at y (Lemma-style check).

    The theory pins this ratio into a universal [c, C]; we return it and let
    property tests record the measured range.
    """
    y = as_point(y, E.dim)
    z = as_point(z, E.dim)
    x = as_point(x, E.dim)
    if not cone_contains(ConeSpec(apex=y), x, E):
        raise ValueError("x is not in the cone at y")
    num = float(np.linalg.norm(x - z))
    den = float(np.linalg.norm(x - y) + np.linalg.norm(y - z))
    return num / den
