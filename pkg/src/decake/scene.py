"""World model: powder-caked parts, the origin bin, flip collection area,
destination bin, and mass bookkeeping; plus seeded scenario generation.

Powder is carried as a per-face depth field (mm) over the part footprint.
`powder_top` is always the currently-upward face; flipping swaps the two
fields and toggles `face_up` (which remembers whether the original top is
currently exposed).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SceneConfig, SimConfig, WorkcellConfig
from .errors import NoSuchPart, SceneOverflow
from .geometry import (
    GridField,
    Polygon2,
    Pose,
    grid_integrate,
    point_in_polygon,
    points_in_polygon,
    polygons_overlap,
)

# g/mm^3; the single bulk-density constant turning depth fields into grams
DEFAULT_POWDER_DENSITY = 5.5e-4

GRAVITY = 9.81e-3  # N per gram


class PartStatus(enum.Enum):
    IN_BIN = "InBin"
    HELD = "Held"
    ON_FLIP_AREA = "OnFlipArea"
    DONE = "Done"
    SKIPPED = "Skipped"


@dataclass(frozen=True)
class PartSpec:
    """Immutable description of a part type."""

    footprint: Polygon2           # local frame, centroid at the origin
    thickness: float              # mm
    clean_mass: float             # g
    porosity: float               # [0, 1], degrades the suction seal

    def __post_init__(self):
        if self.thickness <= 0.0:
            raise ValueError("thickness must be > 0")
        if self.clean_mass <= 0.0:
            raise ValueError("clean_mass must be > 0")
        if not 0.0 <= self.porosity <= 1.0:
            raise ValueError("porosity must be in [0, 1]")
        if not math.isfinite(self.flatness_ratio):
            raise ValueError("flatness ratio must be finite")

    @property
    def min_extent(self) -> float:
        """Smaller side of the footprint bounding box (mm)."""
        xmin, ymin, xmax, ymax = self.footprint.bbox()
        return min(xmax - xmin, ymax - ymin)

    @property
    def flatness_ratio(self) -> float:
        """thickness / min footprint extent; the passive flipper's gate."""
        return self.thickness / self.min_extent

    @property
    def bounding_radius(self) -> float:
        """Radius of the footprint's bounding circle about the local origin."""
        a = self.footprint.array
        return float(np.hypot(a[:, 0], a[:, 1]).max())


@dataclass
class PartState:
    """One part instance: the unit of work moving through the cell."""

    id: int
    spec: PartSpec
    pose: Pose
    face_up: bool                 # True = original top face currently exposed
    powder_top: GridField         # depth (mm) on the currently-up face
    powder_bottom: GridField      # depth (mm) on the currently-down face
    status: PartStatus = PartStatus.IN_BIN

    def world_footprint(self) -> Polygon2:
        return self.spec.footprint.transformed(self.pose)

    def top_z(self) -> float:
        """Height of the solid top surface (powder excluded)."""
        return self.pose.z + self.spec.thickness

    def world_to_local(self, xs, ys):
        c, s = math.cos(-self.pose.yaw), math.sin(-self.pose.yaw)
        dx = np.asarray(xs, dtype=float) - self.pose.x
        dy = np.asarray(ys, dtype=float) - self.pose.y
        return c * dx - s * dy, s * dx + c * dy

    def powder_depth_at(self, xs, ys, face: str = "top"):
        """Nearest-cell powder depth (mm) at world points; 0 off the footprint."""
        grid = self.powder_top if face == "top" else self.powder_bottom
        lx, ly = self.world_to_local(xs, ys)
        ny, nx = grid.shape
        ix = np.floor((lx - grid.origin[0]) / grid.resolution).astype(int)
        iy = np.floor((ly - grid.origin[1]) / grid.resolution).astype(int)
        valid = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        depth = np.zeros(np.shape(lx), dtype=float)
        depth[valid] = grid.cells[iy[valid], ix[valid]]
        inside = points_in_polygon(lx, ly, self.spec.footprint)
        depth[~inside] = 0.0
        return depth

    def top_height_at(self, xs, ys):
        """World height of the part's upper surface (solid + powder) at world
        points; NaN where the footprint does not cover the point."""
        lx, ly = self.world_to_local(xs, ys)
        inside = points_in_polygon(lx, ly, self.spec.footprint)
        h = np.full(np.shape(lx), np.nan)
        if inside.any():
            depth = self.powder_depth_at(xs, ys, "top")
            h[inside] = self.top_z() + depth[inside]
        return h


@dataclass
class SceneState:
    """Everything the orchestrator mutates: parts, stations, collected dust."""

    bin: Polygon2
    bin_wall_height: float
    flip_area: Polygon2
    destination: Polygon2
    parts: list[PartState] = field(default_factory=list)
    dust_collected: float = 0.0          # g captured by the cleaning station
    flip_area_spill: float = 0.0         # g shed during flips
    rng_seed: int = 0

    def part(self, part_id: int) -> PartState:
        for p in self.parts:
            if p.id == part_id:
                return p
        raise NoSuchPart(f"no part with id {part_id}")

    def resting_parts(self) -> list[PartState]:
        """Parts physically supported on a surface (anything not on the cup)."""
        return [p for p in self.parts if p.status is not PartStatus.HELD]

    def surface_height_at(self, x: float, y: float) -> float:
        """Point z-buffer: top of the highest resting part covering (x, y),
        else the table/floor at 0. This is what a descending cup meets."""
        best = 0.0
        for p in self.resting_parts():
            h = p.top_height_at(np.array([x]), np.array([y]))[0]
            if not math.isnan(h):
                best = max(best, float(h))
        return best


def insole_footprint(length: float = 250.0, width: float = 80.0, arc_points: int = 6) -> Polygon2:
    """Stadium-shaped insole-scale footprint, centroid at the origin.

    A rectangle of (length - width) joined by semicircular ends of diameter
    `width`, approximated polygonally.
    """
    if width > length:
        raise ValueError("width must not exceed length")
    half_w = width / 2.0
    half_straight = (length - width) / 2.0
    pts: list[tuple[float, float]] = []
    # bottom edge, then right cap, top edge, left cap — CCW
    pts.append((-half_straight, -half_w))
    pts.append((half_straight, -half_w))
    for i in range(1, arc_points):
        a = -math.pi / 2.0 + math.pi * i / arc_points
        pts.append((half_straight + half_w * math.cos(a), half_w * math.sin(a)))
    pts.append((half_straight, half_w))
    pts.append((-half_straight, half_w))
    for i in range(1, arc_points):
        a = math.pi / 2.0 + math.pi * i / arc_points
        pts.append((-half_straight + half_w * math.cos(a), half_w * math.sin(a)))
    return Polygon2(tuple(pts))


def rect_polygon(xmin: float, ymin: float, xmax: float, ymax: float) -> Polygon2:
    return Polygon2(((xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)))


def footprint_grid(footprint: Polygon2, resolution: float) -> tuple[GridField, np.ndarray]:
    """Zeroed depth grid over the footprint bbox plus the inside-cells mask."""
    xmin, ymin, xmax, ymax = footprint.bbox()
    nx = max(1, int(math.ceil((xmax - xmin) / resolution)))
    ny = max(1, int(math.ceil((ymax - ymin) / resolution)))
    grid = GridField((xmin, ymin), resolution, np.zeros((ny, nx)))
    gx, gy = grid.cell_centers()
    mask = points_in_polygon(gx, gy, footprint)
    return grid, mask


def _bilinear_upsample(coarse: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    ny, nx = shape
    cy, cx = coarse.shape
    ys = np.linspace(0.0, cy - 1.0, ny)
    xs = np.linspace(0.0, cx - 1.0, nx)
    y0 = np.floor(ys).astype(int).clip(0, cy - 2)
    x0 = np.floor(xs).astype(int).clip(0, cx - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[np.ix_(y0, x0)]
    b = coarse[np.ix_(y0, x0 + 1)]
    c = coarse[np.ix_(y0 + 1, x0)]
    d = coarse[np.ix_(y0 + 1, x0 + 1)]
    return (a * (1 - fx) * (1 - fy) + b * fx * (1 - fy)
            + c * (1 - fx) * fy + d * fx * fy)


def powder_field(
    footprint: Polygon2,
    resolution: float,
    target_mass: float,
    density: float,
    rng: np.random.Generator,
    noise_amplitude: float = 0.5,
) -> GridField:
    """Depth field carrying exactly `target_mass` grams, spread over the
    footprint with smooth random variation."""
    grid, mask = footprint_grid(footprint, resolution)
    if not mask.any():
        raise ValueError("footprint smaller than one grid cell")
    noise = _bilinear_upsample(
        rng.uniform(1.0 - noise_amplitude, 1.0 + noise_amplitude, size=(4, 4)),
        grid.shape,
    )
    cells = np.where(mask, np.maximum(noise, 0.0), 0.0)
    total = cells.sum() * resolution * resolution
    if target_mass > 0.0 and total <= 0.0:
        cells = mask.astype(float)
        total = cells.sum() * resolution * resolution
    if target_mass > 0.0:
        cells = cells * (target_mass / density / total)
    else:
        cells = np.zeros_like(cells)
    return grid.with_cells(cells)


def support_height(candidate: Polygon2, parts: list[PartState]) -> float:
    """Settle rule: a part rests on the highest solid top among the already
    placed parts its footprint overlaps, else on the floor."""
    z = 0.0
    for p in parts:
        if polygons_overlap(candidate, p.world_footprint()):
            z = max(z, p.top_z())
    return z


def scene_generate(
    seed: int,
    n_parts: int,
    powder_mass_mean: float | None = None,
    powder_mass_sd: float | None = None,
    cfg: SimConfig | None = None,
) -> SceneState:
    """Seeded scenario: n parts dropped randomly into the bin, stacked by the
    settle rule, each caked with Normal(mean, sd) grams of powder split over
    the two faces. Identical seed => identical scene."""
    if n_parts < 0:
        raise ValueError("n_parts must be >= 0")
    cfg = cfg or SimConfig()
    sc: SceneConfig = cfg.scene
    wc: WorkcellConfig = cfg.workcell
    mean = sc.powder_mass_mean if powder_mass_mean is None else powder_mass_mean
    sd = sc.powder_mass_sd if powder_mass_sd is None else powder_mass_sd
    if mean < 0.0:
        raise ValueError("powder_mass_mean must be >= 0")

    rng = np.random.default_rng(seed)
    bin_poly = rect_polygon(*wc.bin_rect)
    scene = SceneState(
        bin=bin_poly,
        bin_wall_height=wc.bin_wall_height,
        flip_area=rect_polygon(*wc.flip_area_rect),
        destination=rect_polygon(*wc.destination_rect),
        rng_seed=int(seed),
    )
    footprint = insole_footprint(sc.part_length, sc.part_width)
    spec = PartSpec(
        footprint=footprint,
        thickness=sc.part_thickness,
        clean_mass=sc.clean_mass,
        porosity=sc.porosity,
    )
    xmin, ymin, xmax, ymax = bin_poly.bbox()
    for pid in range(n_parts):
        placed = False
        for _ in range(sc.placement_tries):
            x = rng.uniform(xmin, xmax)
            y = rng.uniform(ymin, ymax)
            yaw = rng.uniform(-math.pi, math.pi)
            pose = Pose(x, y, 0.0, yaw)
            fp = footprint.transformed(pose)
            if all(point_in_polygon(v, bin_poly) for v in fp.vertices):
                z = support_height(fp, scene.parts)
                pose = Pose(x, y, z, yaw)
                placed = True
                break
        if not placed:
            raise SceneOverflow(
                f"could not place part {pid} after {sc.placement_tries} tries"
            )
        powder_mass = max(0.0, rng.normal(mean, sd)) if sd > 0 else mean
        top_mass = powder_mass * sc.powder_split_top
        bottom_mass = powder_mass - top_mass
        top = powder_field(footprint, sc.grid_resolution, top_mass,
                           sc.powder_density, rng, sc.powder_noise_amplitude)
        bottom = powder_field(footprint, sc.grid_resolution, bottom_mass,
                              sc.powder_density, rng, sc.powder_noise_amplitude)
        scene.parts.append(
            PartState(id=pid, spec=spec, pose=pose, face_up=True,
                      powder_top=top, powder_bottom=bottom)
        )
    return scene


def part_total_mass(p: PartState, powder_density: float = DEFAULT_POWDER_DENSITY) -> float:
    """Clean mass plus the powder on both faces, in grams."""
    volume = grid_integrate(p.powder_top) + grid_integrate(p.powder_bottom)
    return p.spec.clean_mass + powder_density * volume


def scene_total_mass(scene: SceneState, powder_density: float = DEFAULT_POWDER_DENSITY) -> float:
    """Conserved quantity: all part mass + collected dust + flip-area spill."""
    return (sum(part_total_mass(p, powder_density) for p in scene.parts)
            + scene.dust_collected + scene.flip_area_spill)


def exposed_cell_mask(scene: SceneState, target: PartState) -> np.ndarray:
    """Boolean mask over the target's top grid: footprint cells whose top-down
    projection is not covered by any part resting above the target."""
    grid = target.powder_top
    gx, gy = grid.cell_centers()
    inside = points_in_polygon(gx, gy, target.spec.footprint)
    # map the target's own cell centers into world coordinates
    c, s = math.cos(target.pose.yaw), math.sin(target.pose.yaw)
    wx = c * gx - s * gy + target.pose.x
    wy = s * gx + c * gy + target.pose.y
    covered = np.zeros(gx.shape, dtype=bool)
    for other in scene.resting_parts():
        if other.id == target.id:
            continue
        if other.pose.z < target.top_z() - 1e-9:
            continue  # side-by-side or below, not resting above
        ox, oy = other.world_to_local(wx, wy)
        covered |= points_in_polygon(ox, oy, other.spec.footprint)
    return inside & ~covered


def exposed_top_area(scene: SceneState, part_id: int) -> float:
    """Area (mm^2) of the part's footprint cells whose top-down projection is
    not covered by any part resting above it."""
    target = scene.part(part_id)
    if target.status not in (PartStatus.IN_BIN, PartStatus.ON_FLIP_AREA):
        raise ValueError(f"part {part_id} is {target.status.value}, not resting")
    mask = exposed_cell_mask(scene, target)
    return float(mask.sum()) * target.powder_top.resolution ** 2


# ---------------------------------------------------------------------------
# serialization

def _polygon_to_json(p: Polygon2) -> list:
    return [[x, y] for x, y in p.vertices]


def _polygon_from_json(data) -> Polygon2:
    return Polygon2(tuple((float(x), float(y)) for x, y in data))


def _grid_to_json(g: GridField) -> dict:
    return {
        "origin": [g.origin[0], g.origin[1]],
        "resolution": g.resolution,
        "cells": [[float(v) for v in row] for row in g.cells],
    }


def _grid_from_json(data) -> GridField:
    return GridField(
        (float(data["origin"][0]), float(data["origin"][1])),
        float(data["resolution"]),
        np.array(data["cells"], dtype=float),
    )


def scene_to_dict(scene: SceneState) -> dict:
    return {
        "seed": scene.rng_seed,
        "bin": {
            "polygon": _polygon_to_json(scene.bin),
            "wall_height": scene.bin_wall_height,
        },
        "flip_area": _polygon_to_json(scene.flip_area),
        "destination": _polygon_to_json(scene.destination),
        "parts": [
            {
                "id": p.id,
                "footprint": _polygon_to_json(p.spec.footprint),
                "thickness": p.spec.thickness,
                "clean_mass": p.spec.clean_mass,
                "porosity": p.spec.porosity,
                "pose": {"x": p.pose.x, "y": p.pose.y, "z": p.pose.z, "yaw": p.pose.yaw},
                "face_up": p.face_up,
                "powder_top": _grid_to_json(p.powder_top),
                "powder_bottom": _grid_to_json(p.powder_bottom),
                "status": p.status.value,
            }
            for p in scene.parts
        ],
        "dust_collected": scene.dust_collected,
        "flip_area_spill": scene.flip_area_spill,
    }


def scene_from_dict(data: dict) -> SceneState:
    scene = SceneState(
        bin=_polygon_from_json(data["bin"]["polygon"]),
        bin_wall_height=float(data["bin"]["wall_height"]),
        flip_area=_polygon_from_json(data["flip_area"]),
        destination=_polygon_from_json(data["destination"]),
        dust_collected=float(data["dust_collected"]),
        flip_area_spill=float(data.get("flip_area_spill", 0.0)),
        rng_seed=int(data["seed"]),
    )
    for pd in data["parts"]:
        spec = PartSpec(
            footprint=_polygon_from_json(pd["footprint"]),
            thickness=float(pd["thickness"]),
            clean_mass=float(pd["clean_mass"]),
            porosity=float(pd["porosity"]),
        )
        pose = pd["pose"]
        scene.parts.append(
            PartState(
                id=int(pd["id"]),
                spec=spec,
                pose=Pose(pose["x"], pose["y"], pose["z"], pose["yaw"]),
                face_up=bool(pd["face_up"]),
                powder_top=_grid_from_json(pd["powder_top"]),
                powder_bottom=_grid_from_json(pd["powder_bottom"]),
                status=PartStatus(pd["status"]),
            )
        )
    return scene


def save_scene(scene: SceneState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), sort_keys=True))


def load_scene(path: str | Path) -> SceneState:
    return scene_from_dict(json.loads(Path(path).read_text()))
