"""Camera + detector stage, simulated.

The depth side is an exact orthographic z-buffer over a query region. The
CNN detector is replaced by a statistical model injecting instance-level
errors (missed parts, spurious detections) calibrated to the measured recall
and precision; downstream logic only ever observes those instance events.
The second perception stage (centroid/bbox, pickability, in-region and
not-floating heuristics) is computed geometrically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PerceptionConfig
from .errors import SensorBusy
from .geometry import Aabb3, GridField, Polygon2, point_in_polygon, points_in_polygon
from .scene import SceneState

DEFAULT_CUP_RADIUS = 15.0  # mm, matches the suction config default


class SensorMode(enum.Enum):
    """IR-strobe state: the camera cannot serve 2D and depth at once."""

    DEPTH2D_OFF = "Depth2D_off"
    DEPTH2D_ON = "Depth2D_on"


@dataclass(frozen=True)
class DepthImage:
    """Top-down height render (mm) over a region polygon. Cells outside the
    region are floor height 0. `owner` caches which part won each cell
    (-1 = floor), filled by render_depth."""

    heights: GridField
    sensor_mode: SensorMode
    region: Polygon2
    owner: np.ndarray = field(repr=False)

    def surface_at(self, x: float, y: float) -> float:
        g = self.heights
        ix = int(math.floor((x - g.origin[0]) / g.resolution))
        iy = int(math.floor((y - g.origin[1]) / g.resolution))
        ny, nx = g.shape
        if 0 <= ix < nx and 0 <= iy < ny:
            return float(g.cells[iy, ix])
        return 0.0

    def part_masks(self) -> dict[int, tuple]:
        """Per visible part: (mask, centroid, bbox, exposed area). Derived
        from `owner` once and cached; the image is immutable."""
        try:
            return self._mask_cache
        except AttributeError:
            pass
        cache: dict[int, tuple] = {}
        for pid in np.unique(self.owner):
            if pid < 0:
                continue
            idx = np.argwhere(self.owner == pid)
            centroid, bbox, area = _mask_geometry(idx, self)
            mask = frozenset((int(a), int(b)) for a, b in idx)
            cache[int(pid)] = (mask, centroid, bbox, area)
        object.__setattr__(self, "_mask_cache", cache)
        return cache


@dataclass(frozen=True)
class Detection:
    """One perceived part instance. part_id_hypothesis is None for spurious
    detections (the simulator knows; downstream code must not rely on it)."""

    part_id_hypothesis: int | None
    mask: frozenset[tuple[int, int]]   # (iy, ix) cells of the depth grid
    confidence: float
    centroid: tuple[float, float, float]
    bbox: Aabb3
    exposed_area: float                # mm^2

    def __post_init__(self):
        if not self.mask:
            raise ValueError("detection mask must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        if not self.bbox.contains(self.centroid):
            raise ValueError("centroid must lie inside bbox")


@dataclass
class DetectorModel:
    """Statistical stand-in for the trained detector. Owns its rng stream so
    detection sequences are a pure function of the model seed."""

    recall: float = 0.967
    precision: float = 0.975
    confidence_threshold: float = 0.95
    true_confidence: tuple[float, float] = (0.95, 1.0)
    spurious_confidence: tuple[float, float] = (0.90, 0.99)
    spurious_mask_cells: tuple[int, int] = (5, 20)
    spurious_z_offset: tuple[float, float] = (0.0, 40.0)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        for name in ("recall", "precision", "confidence_threshold"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")

    @classmethod
    def from_config(cls, cfg: PerceptionConfig, seed) -> "DetectorModel":
        return cls(
            recall=cfg.recall,
            precision=cfg.precision,
            confidence_threshold=cfg.confidence_threshold,
            true_confidence=tuple(cfg.true_confidence),
            spurious_confidence=tuple(cfg.spurious_confidence),
            spurious_mask_cells=tuple(cfg.spurious_mask_cells),
            spurious_z_offset=tuple(cfg.spurious_z_offset),
            rng=np.random.default_rng(seed),
        )


def render_depth(
    scene: SceneState,
    region: Polygon2 | None = None,
    sensor_mode: SensorMode = SensorMode.DEPTH2D_OFF,
    resolution: float | None = None,
) -> DepthImage:
    """Orthographic top-down z-buffer over `region` (default: the bin).

    Each in-region cell holds the max over covering parts of solid top plus
    local powder depth; uncovered or out-of-region cells are floor height 0.
    """
    region = region or scene.bin
    if resolution is None:
        resolution = (scene.parts[0].powder_top.resolution if scene.parts else 2.0)
    xmin, ymin, xmax, ymax = region.bbox()
    nx = max(1, int(math.ceil((xmax - xmin) / resolution)))
    ny = max(1, int(math.ceil((ymax - ymin) / resolution)))
    heights = np.zeros((ny, nx))
    owner = np.full((ny, nx), -1, dtype=int)
    xs = xmin + (np.arange(nx) + 0.5) * resolution
    ys = ymin + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    in_region = points_in_polygon(gx, gy, region)
    for part in scene.resting_parts():
        h = part.top_height_at(gx, gy)
        wins = in_region & ~np.isnan(h) & (np.nan_to_num(h, nan=-1.0) > heights)
        heights[wins] = h[wins]
        owner[wins] = part.id
    grid = GridField((xmin, ymin), resolution, heights)
    return DepthImage(heights=grid, sensor_mode=sensor_mode, region=region, owner=owner)


def _mask_geometry(mask_idx: np.ndarray, depth: DepthImage):
    """Centroid, tight bbox, and area of a set of (iy, ix) depth cells."""
    g = depth.heights
    iy = mask_idx[:, 0]
    ix = mask_idx[:, 1]
    cx = g.origin[0] + (ix + 0.5) * g.resolution
    cy = g.origin[1] + (iy + 0.5) * g.resolution
    cz = g.cells[iy, ix]
    bbox = Aabb3(
        (float(cx.min()), float(cy.min()), float(cz.min())),
        (float(cx.max()), float(cy.max()), float(cz.max())),
    )
    # means are inside the bounds mathematically; clamp away summation noise
    centroid = tuple(
        min(max(float(v), lo), hi)
        for v, lo, hi in zip((cx.mean(), cy.mean(), cz.mean()), bbox.min, bbox.max)
    )
    area = float(len(mask_idx)) * g.resolution ** 2
    return centroid, bbox, area


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(lo) if hi <= lo else float(rng.uniform(lo, hi))


def _keep_fraction(conf_range: tuple[float, float], threshold: float) -> float:
    lo, hi = conf_range
    if hi <= lo:
        return 1.0 if lo >= threshold else 0.0
    return float(np.clip((hi - threshold) / (hi - lo), 0.0, 1.0))


def detect(scene: SceneState, depth: DepthImage, model: DetectorModel) -> list[Detection]:
    """Emit detections for visible parts with the model's error statistics.

    Each visible part is detected with probability `recall`; spurious
    detections are injected at the Poisson rate that makes the expected
    post-threshold precision equal `precision`. Anything below the confidence
    threshold is dropped.
    """
    if depth.sensor_mode is SensorMode.DEPTH2D_ON:
        raise SensorBusy("IR strobe is on; 2D detection pass unavailable")
    rng = model.rng
    g = depth.heights
    ny, nx = g.shape

    visible = sorted(depth.part_masks().items())
    detections: list[Detection] = []
    for pid, (mask, centroid, bbox, area) in visible:
        if rng.random() >= model.recall:
            continue
        conf = _uniform(rng, *model.true_confidence)
        if conf < model.confidence_threshold:
            continue
        detections.append(
            Detection(
                part_id_hypothesis=pid,
                mask=mask,
                confidence=conf,
                centroid=centroid,
                bbox=bbox,
                exposed_area=area,
            )
        )

    # spurious stream sized so that E[kept spurious] / E[kept true] hits the
    # configured precision after thresholding
    keep_spur = _keep_fraction(model.spurious_confidence, model.confidence_threshold)
    keep_true = _keep_fraction(model.true_confidence, model.confidence_threshold)
    expected_true = model.recall * keep_true * len(visible)
    n_spurious = 0
    if model.precision < 1.0 and keep_spur > 0.0 and expected_true > 0.0:
        lam = expected_true * (1.0 - model.precision) / model.precision / keep_spur
        n_spurious = int(rng.poisson(lam))
    for _ in range(n_spurious):
        size = int(rng.integers(model.spurious_mask_cells[0],
                                model.spurious_mask_cells[1] + 1))
        cy = int(rng.integers(0, ny))
        cx = int(rng.integers(0, nx))
        conf = _uniform(rng, *model.spurious_confidence)
        z_off = _uniform(rng, *model.spurious_z_offset)
        if conf < model.confidence_threshold:
            continue
        blob = _blob_cells(cy, cx, size, ny, nx)
        centroid, bbox, area = _mask_geometry(blob, depth)
        centroid = (centroid[0], centroid[1], centroid[2] + z_off)
        bbox = Aabb3(
            (bbox.min[0], bbox.min[1], bbox.min[2] + z_off),
            (bbox.max[0], bbox.max[1], bbox.max[2] + z_off),
        )
        detections.append(
            Detection(
                part_id_hypothesis=None,
                mask=frozenset((int(a), int(b)) for a, b in blob),
                confidence=conf,
                centroid=centroid,
                bbox=bbox,
                exposed_area=area,
            )
        )
    return detections


def _blob_cells(cy: int, cx: int, size: int, ny: int, nx: int) -> np.ndarray:
    """Rough disc of ~size cells around (cy, cx), clipped to the grid."""
    r = max(1, int(math.ceil(math.sqrt(size / math.pi))))
    cells = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx * dx + dy * dy <= r * r and len(cells) < size:
                iy, ix = cy + dy, cx + dx
                if 0 <= iy < ny and 0 <= ix < nx:
                    cells.append((iy, ix))
    if not cells:
        cells = [(min(max(cy, 0), ny - 1), min(max(cx, 0), nx - 1))]
    return np.array(cells, dtype=int)


@dataclass(frozen=True)
class PoseEstimate:
    centroid: tuple[float, float, float]
    bbox: Aabb3
    pickable: bool


def estimate_pose(
    d: Detection,
    depth: DepthImage,
    cup_area: float = math.pi * DEFAULT_CUP_RADIUS ** 2,
    floating_tolerance: float = 10.0,
) -> PoseEstimate:
    """Second perception stage: accept the detection's centroid/bbox and judge
    pickability — enough exposed surface for the cup, inside the support
    region's walls, and not floating above its support."""
    cx, cy, cz = d.centroid
    in_region = point_in_polygon((cx, cy), depth.region)
    supported = abs(cz - depth.surface_at(cx, cy)) <= floating_tolerance
    pickable = (d.exposed_area >= cup_area) and in_region and supported
    return PoseEstimate(centroid=d.centroid, bbox=d.bbox, pickable=pickable)


def write_pgm(grid: GridField, path: str | Path, max_value: float | None = None) -> None:
    """Dump a grid as an 8-bit ASCII PGM for eyeballing renders and masks."""
    cells = grid.cells
    peak = max_value if max_value is not None else (cells.max() if cells.size else 1.0)
    peak = peak if peak > 0 else 1.0
    scaled = np.clip(cells / peak * 255.0, 0, 255).astype(int)
    ny, nx = scaled.shape
    lines = [f"P2\n{nx} {ny}\n255\n"]
    # top row last so the image reads with +y up
    for row in scaled[::-1]:
        lines.append(" ".join(str(v) for v in row) + "\n")
    Path(path).write_text("".join(lines))


def mask_to_grid(mask: frozenset[tuple[int, int]], depth: DepthImage) -> GridField:
    """Binary mask as a grid aligned with the depth image (for PGM dumps)."""
    cells = np.zeros(depth.heights.shape)
    for iy, ix in mask:
        cells[iy, ix] = 1.0
    return depth.heights.with_cells(cells)
