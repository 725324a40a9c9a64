"""Plain geometric substrate: 2D polygons, scalar grids, 3D boxes, rigid poses.

Units are fixed across the whole simulator: millimeters, grams, seconds,
newtons. Angles are radians. There is no unit-conversion layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPolygon

# Vertices closer than this (mm) to an edge count as "on the boundary".
BOUNDARY_EPS = 1e-9


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    """End-effector / part pose: position in mm, yaw about the vertical axis.

    Parts handled here are nearly flat, so orientation is yaw only; which face
    points up is tracked separately on the part.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.z, self.yaw):
            if not math.isfinite(v):
                raise ValueError(f"non-finite pose component: {v!r}")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Polygon2:
    """Simple polygon, counter-clockwise, area > 0. Vertices in mm."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise InvalidPolygon(f"polygon needs >= 3 vertices, got {len(verts)}")
        if _signed_area(verts) <= 0.0:
            raise InvalidPolygon("polygon must be counter-clockwise with area > 0")
        if _self_intersects(verts):
            raise InvalidPolygon("polygon is self-intersecting")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the vertices."""
        a = self.array
        return (a[:, 0].min(), a[:, 1].min(), a[:, 0].max(), a[:, 1].max())

    def centroid(self) -> tuple[float, float]:
        """Area centroid (standard polygon centroid formula)."""
        v = self.array
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = cross.sum() / 2.0
        cx = ((x + xn) * cross).sum() / (6.0 * area)
        cy = ((y + yn) * cross).sum() / (6.0 * area)
        return (float(cx), float(cy))

    def translated(self, dx: float, dy: float) -> "Polygon2":
        return Polygon2(tuple((x + dx, y + dy) for x, y in self.vertices))

    def transformed(self, pose: Pose) -> "Polygon2":
        """Rotate by pose.yaw, then translate by (pose.x, pose.y)."""
        c, s = math.cos(pose.yaw), math.sin(pose.yaw)
        return Polygon2(
            tuple(
                (c * x - s * y + pose.x, s * x + c * y + pose.y)
                for x, y in self.vertices
            )
        )


def _signed_area(verts: tuple[tuple[float, float], ...]) -> float:
    total = 0.0
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return total / 2.0


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper segment intersection (shared endpoints do not count)."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _self_intersects(verts: tuple[tuple[float, float], ...]) -> bool:
    n = len(verts)
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # skip adjacent edges (they share an endpoint)
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return True
    return False


@dataclass(frozen=True)
class GridField:
    """Uniform 2D grid of non-negative scalars (powder depth, surface heights).

    cells[iy, ix] sits at world (origin_x + (ix+0.5)*res, origin_y + (iy+0.5)*res).
    The array is frozen read-only; copy-on-write everywhere.
    """

    origin: tuple[float, float]
    resolution: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise ValueError("grid resolution must be > 0")
        arr = np.array(self.cells, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ValueError("grid cells must be a 2D array")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError("grid cells must be finite and >= 0")
        arr.flags.writeable = False
        object.__setattr__(self, "cells", arr)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) arrays of cell-center world coordinates, matching cells' shape."""
        ny, nx = self.cells.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def with_cells(self, cells: np.ndarray) -> "GridField":
        return GridField(self.origin, self.resolution, cells)


@dataclass(frozen=True)
class Aabb3:
    """Axis-aligned box, min <= max componentwise. Used for workcell obstacles."""

    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        mn = tuple(float(v) for v in self.min)
        mx = tuple(float(v) for v in self.max)
        if any(a > b for a, b in zip(mn, mx)):
            raise ValueError(f"Aabb3 min {mn} exceeds max {mx}")
        object.__setattr__(self, "min", mn)
        object.__setattr__(self, "max", mx)

    def contains(self, p) -> bool:
        return all(lo <= v <= hi for lo, v, hi in zip(self.min, p, self.max))


def polygon_area(p: Polygon2) -> float:
    """Shoelace area in mm^2. Positive by the CCW invariant."""
    area = _signed_area(p.vertices)
    if area <= 0.0:
        raise InvalidPolygon("degenerate polygon (non-positive area)")
    return area


def point_in_polygon(pt: tuple[float, float], p: Polygon2) -> bool:
    """True iff pt is strictly inside or on the boundary of p.

    Boundary points count as inside: parts resting exactly against the bin
    wall must still pass the in-bin test.
    """
    x, y = float(pt[0]), float(pt[1])
    verts = p.vertices
    n = len(verts)
    # boundary check first: distance from pt to each edge segment
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        seg_len2 = dx * dx + dy * dy
        t = 0.0 if seg_len2 == 0.0 else ((x - x1) * dx + (y - y1) * dy) / seg_len2
        t = min(1.0, max(0.0, t))
        px, py = x1 + t * dx, y1 + t * dy
        if math.hypot(x - px, y - py) <= BOUNDARY_EPS:
            return True
    # even-odd crossing test
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = verts[i]
        xj, yj = verts[j]
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, p: Polygon2) -> np.ndarray:
    """Vectorized even-odd test for arrays of points. Boundary behavior is not
    tightened here (crossing rule only); used for cell rasterization where
    half-cell quantization dominates anyway."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros(xs.shape, dtype=bool)
    verts = p.vertices
    n = len(verts)
    j = n - 1
    for i in range(n):
        xi, yi = verts[i]
        xj, yj = verts[j]
        cond = (yi > ys) != (yj > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = (xj - xi) * (ys - yi) / (yj - yi) + xi
        inside ^= cond & (xs < xcross)
        j = i
    return inside


def polygons_overlap(a: Polygon2, b: Polygon2) -> bool:
    """True iff the polygon interiors/boundaries intersect (predicate only;
    no boolean geometry is constructed)."""
    for v in a.vertices:
        if point_in_polygon(v, b):
            return True
    for v in b.vertices:
        if point_in_polygon(v, a):
            return True
    na, nb = len(a.vertices), len(b.vertices)
    for i in range(na):
        p1, p2 = a.vertices[i], a.vertices[(i + 1) % na]
        for j in range(nb):
            q1, q2 = b.vertices[j], b.vertices[(j + 1) % nb]
            if _segments_intersect(p1, p2, q1, q2):
                return True
    return False


def grid_integrate(f: GridField) -> float:
    """Sum of cells times cell area: depth field (mm) -> volume (mm^3)."""
    return float(f.cells.sum()) * f.resolution * f.resolution
