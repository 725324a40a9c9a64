"""Collision-free end-effector transit via bidirectional RRT in Cartesian
space over axis-aligned workcell obstacles.

The moving body is a sphere (cup plus held payload) so collision checking is
a point-vs-inflated-box distance test. Planning is a pure function of
(workspace, query, seed); identical seeds give identical waypoint lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidQuery, Unreachable
from .geometry import Aabb3


@dataclass(frozen=True)
class Workspace:
    bounds: Aabb3
    obstacles: tuple[Aabb3, ...]
    clearance: float = 0.0       # payload inflation radius, mm

    def __post_init__(self):
        if self.clearance < 0.0:
            raise ValueError("clearance must be >= 0")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))


@dataclass(frozen=True)
class PlannedPath:
    waypoints: tuple[tuple[float, float, float], ...]
    length: float


def _signed_distances(points: np.ndarray, box: Aabb3) -> np.ndarray:
    """Signed distance from points (N, 3) to the box: negative inside."""
    mn = np.asarray(box.min)
    mx = np.asarray(box.max)
    below = mn - points
    above = points - mx
    outside = np.maximum(np.maximum(below, above), 0.0)
    dist_out = np.linalg.norm(outside, axis=1)
    # inside: negative distance to the nearest face
    inside_gap = np.minimum(points - mn, mx - points).min(axis=1)
    inside = (below <= 0).all(axis=1) & (above <= 0).all(axis=1)
    return np.where(inside, -inside_gap, dist_out)


def _points_free(ws: Workspace, points: np.ndarray) -> bool:
    """True iff all points stay in bounds and strictly clear of every obstacle
    (a sphere exactly tangent at the clearance distance is still free)."""
    mn = np.asarray(ws.bounds.min)
    mx = np.asarray(ws.bounds.max)
    if np.any(points < mn) or np.any(points > mx):
        return False
    for box in ws.obstacles:
        if np.any(_signed_distances(points, box) < ws.clearance):
            return False
    return True


def point_free(ws: Workspace, p) -> bool:
    return _points_free(ws, np.asarray(p, dtype=float).reshape(1, 3))


def segment_free(ws: Workspace, a, b, resolution: float = 1.0) -> bool:
    """Sample the segment at the given spacing (inclusive of both ends) and
    test every sample against the inflated obstacles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    n = max(2, int(math.ceil(length / resolution)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    points = a[None, :] + ts[:, None] * (b - a)[None, :]
    return _points_free(ws, points)


def _nearest(nodes: np.ndarray, q: np.ndarray) -> int:
    return int(np.argmin(((nodes - q) ** 2).sum(axis=1)))


def _steer(from_pt: np.ndarray, to_pt: np.ndarray, step: float) -> np.ndarray:
    d = to_pt - from_pt
    dist = float(np.linalg.norm(d))
    if dist <= step:
        return to_pt.copy()
    return from_pt + d * (step / dist)


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        self.nodes = np.empty((capacity + 1, 3))
        self.nodes[0] = root
        self.parents = [-1]
        self.size = 1

    def add(self, point: np.ndarray, parent: int) -> int:
        self.nodes[self.size] = point
        self.parents.append(parent)
        self.size += 1
        return self.size - 1

    def path_to_root(self, idx: int) -> list[np.ndarray]:
        out = []
        while idx >= 0:
            out.append(self.nodes[idx].copy())
            idx = self.parents[idx]
        return out


def _extend(tree: _Tree, q: np.ndarray, ws: Workspace, step: float,
            resolution: float) -> int | None:
    near = _nearest(tree.nodes[: tree.size], q)
    new = _steer(tree.nodes[near], q, step)
    if np.allclose(new, tree.nodes[near]):
        return None
    if not segment_free(ws, tree.nodes[near], new, resolution):
        return None
    return tree.add(new, near)


def _connect(tree: _Tree, q: np.ndarray, ws: Workspace, step: float,
             resolution: float) -> int | None:
    """Repeatedly extend toward q; return the node index if q is reached."""
    while True:
        idx = _extend(tree, q, ws, step, resolution)
        if idx is None:
            return None
        if np.linalg.norm(tree.nodes[idx] - q) < 1e-9:
            return idx


def _path_length(points: list[np.ndarray]) -> float:
    return float(sum(np.linalg.norm(b - a) for a, b in zip(points, points[1:])))


def _shortcut(points: list[np.ndarray], ws: Workspace, rng: np.random.Generator,
              iters: int, resolution: float) -> list[np.ndarray]:
    pts = list(points)
    for _ in range(iters):
        if len(pts) <= 2:
            break
        i = int(rng.integers(0, len(pts) - 1))
        j = int(rng.integers(0, len(pts) - 1))
        if abs(i - j) < 2:
            continue
        i, j = min(i, j), max(i, j)
        if segment_free(ws, pts[i], pts[j], resolution):
            pts = pts[: i + 1] + pts[j:]
    return pts


def plan(
    ws: Workspace,
    start,
    goal,
    seed: int = 0,
    max_iters: int = 2000,
    step: float = 10.0,
    goal_bias: float = 0.1,
    shortcut_iters: int = 100,
    resolution: float = 1.0,
) -> PlannedPath:
    """RRT-Connect with shortcut smoothing and a dense final re-validation.

    Raises InvalidQuery if either endpoint is in collision, Unreachable when
    the iteration budget runs out before the trees connect.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if not point_free(ws, start):
        raise InvalidQuery(f"start {tuple(start)} is in collision")
    if not point_free(ws, goal):
        raise InvalidQuery(f"goal {tuple(goal)} is in collision")

    rng = np.random.default_rng(seed)
    if float(np.linalg.norm(goal - start)) < 1e-9:
        return PlannedPath((tuple(start),), 0.0)

    if segment_free(ws, start, goal, resolution):
        raw = [start, goal]
    else:
        raw = _connect_trees(ws, start, goal, rng, max_iters, step, goal_bias,
                             resolution)
    raw_length = _path_length(raw)
    smooth = _shortcut(raw, ws, rng, shortcut_iters, resolution)
    if _path_length(smooth) > raw_length + 1e-9:
        smooth = raw
    for a, b in zip(smooth, smooth[1:]):
        if not segment_free(ws, a, b, resolution):
            raise Unreachable("smoothed path failed dense re-validation")
    return PlannedPath(tuple(tuple(float(v) for v in p) for p in smooth),
                       _path_length(smooth))


def _connect_trees(ws: Workspace, start: np.ndarray, goal: np.ndarray,
                   rng: np.random.Generator, max_iters: int, step: float,
                   goal_bias: float, resolution: float) -> list[np.ndarray]:
    mn = np.asarray(ws.bounds.min)
    mx = np.asarray(ws.bounds.max)
    tree_a = _Tree(start, max_iters)
    tree_b = _Tree(goal, max_iters)
    a_is_start = True
    for _ in range(max_iters):
        if rng.random() < goal_bias:
            q = tree_b.nodes[0].copy()   # aim at the other tree's root
        else:
            q = rng.uniform(mn, mx)
        idx_a = _extend(tree_a, q, ws, step, resolution)
        if idx_a is not None:
            idx_b = _connect(tree_b, tree_a.nodes[idx_a], ws, step, resolution)
            if idx_b is not None:
                part_a = tree_a.path_to_root(idx_a)[::-1]
                part_b = tree_b.path_to_root(idx_b)
                pts = part_a + part_b[1:] if a_is_start else part_b[::-1] + part_a[::-1][1:]
                return pts
        tree_a, tree_b = tree_b, tree_a
        a_is_start = not a_is_start
    raise Unreachable(f"no path after {max_iters} iterations")


def path_to_csv(path: PlannedPath, file_path) -> None:
    import csv

    with open(file_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z"])
        for x, y, z in path.waypoints:
            writer.writerow([f"{x:.3f}", f"{y:.3f}", f"{z:.3f}"])
