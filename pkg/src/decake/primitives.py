"""Task-level actions: suction pick with stop-height verification, brushing
with spiral/rectircle coverage paths and powder-removal accounting, passive
flip, and place.

Brushing geometry: the rack is reduced to one effective brush disc at a fixed
station point; moving the held part along a pattern sweeps that disc across
the part's downward face. Patterns are generated in part-local face
coordinates centered on the part centroid at motion start.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CleaningConfig, ControlConfig, SuctionConfig
from .control import (
    ContactModel,
    DescentResult,
    FTReading,
    compliant_descend,
    hybrid_track,
    monitor_lift,
)
from .errors import NotFlippable
from .geometry import Polygon2, Pose, normalize_yaw, point_in_polygon
from .perception import Detection
from .scene import (
    GRAVITY,
    DEFAULT_POWDER_DENSITY,
    PartState,
    PartStatus,
    SceneState,
    exposed_cell_mask,
    part_total_mass,
    polygons_overlap,
    support_height,
)


class Pattern(enum.Enum):
    SPIRAL = "Spiral"
    RECTIRCLE = "Rectircle"


@dataclass(frozen=True)
class SuctionModel:
    """Vacuum gripper: hold force = seal * dP * cup area (kPa * mm^2 * 1e-3 = N)."""

    cup_radius: float = 15.0           # mm
    vacuum_differential: float = 20.0  # kPa
    safety_factor: float = 2.0

    def __post_init__(self):
        if min(self.cup_radius, self.vacuum_differential, self.safety_factor) <= 0.0:
            raise ValueError("suction parameters must be > 0")

    @property
    def cup_area(self) -> float:
        return math.pi * self.cup_radius ** 2

    def hold_force(self, seal: float) -> float:
        return seal * self.vacuum_differential * self.cup_area * 1e-3

    @classmethod
    def from_config(cls, cfg: SuctionConfig) -> "SuctionModel":
        return cls(cup_radius=cfg.cup_radius,
                   vacuum_differential=cfg.vacuum_differential,
                   safety_factor=cfg.safety_factor)


@dataclass(frozen=True)
class BrushTrajectory:
    """Timed (t, x, y) samples of one cleaning pattern plus its force setpoint."""

    pattern: Pattern
    samples: tuple[tuple[float, float, float], ...]
    f_set: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be > 0")
        ts = [s[0] for s in self.samples]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("samples must be time-monotone")


@dataclass(frozen=True)
class RemovalModel:
    """Calibrated brushing surrogate: a cell in the brush disc loses fraction
    rho_max * clamp(fz / f_ref, 0, 1) of its powder per dwell pass."""

    rho_max: float = 0.065
    f_ref: float = 5.0
    brush_radius: float = 25.0
    pass_dwell: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rho_max <= 1.0:
            raise ValueError("rho_max must be in (0, 1]")
        if self.f_ref <= 0.0 or self.brush_radius <= 0.0 or self.pass_dwell <= 0.0:
            raise ValueError("f_ref, brush_radius and pass_dwell must be > 0")

    @classmethod
    def from_config(cls, cfg: CleaningConfig) -> "RemovalModel":
        return cls(rho_max=cfg.rho_max, f_ref=cfg.f_ref,
                   brush_radius=cfg.brush_radius, pass_dwell=cfg.pass_dwell)


def spiral_path(
    center: tuple[float, float],
    pitch: float,
    r_max: float,
    speed: float,
    duration: float | None = None,
    f_set: float = 5.0,
    sample_period: float = 0.02,
) -> BrushTrajectory:
    """Archimedean spiral r = pitch * theta / 2pi out to r_max, then circling
    at r_max about the same center, at constant tangential speed."""
    if pitch <= 0.0 or r_max <= 0.0 or speed <= 0.0:
        raise ValueError("pitch, r_max and speed must be > 0")
    b = pitch / (2.0 * math.pi)
    if duration is None:
        # spiral phase plus one circling lap
        duration = _spiral_arc_length(b, r_max / b) / speed + 2.0 * math.pi * r_max / speed
    cx, cy = center
    ds = speed * sample_period
    samples = [(0.0, cx, cy)]
    theta = 0.0
    r = 0.0
    t = 0.0
    while t < duration - 1e-12:
        t = min(t + sample_period, duration)
        if r < r_max:
            theta += ds / math.hypot(r, b)
            r = min(b * theta, r_max)
        else:
            theta += ds / r_max
        samples.append((t, cx + r * math.cos(theta), cy + r * math.sin(theta)))
    return BrushTrajectory(Pattern.SPIRAL, tuple(samples), f_set, duration)


def _spiral_arc_length(b: float, theta: float) -> float:
    # closed form for r = b*theta
    s = math.sqrt(theta * theta + 1.0)
    return 0.5 * b * (theta * s + math.asinh(theta))


def rectircle_path(
    center: tuple[float, float],
    width: float,
    height: float,
    direction: float,
    speed: float,
    duration: float | None = None,
    f_set: float = 5.0,
    sample_period: float = 0.02,
) -> BrushTrajectory:
    """Closed stadium curve: straights of length `width` joined by semicircular
    caps of diameter `height`, rotated by `direction`, looping until the
    duration elapses. width = 0 degenerates to a circle."""
    if width < 0.0 or height <= 0.0 or speed <= 0.0:
        raise ValueError("width must be >= 0, height and speed > 0")
    r = height / 2.0
    loop_len = 2.0 * width + math.pi * height
    if duration is None:
        duration = loop_len / speed
    c, s = math.cos(direction), math.sin(direction)
    cx, cy = center

    def at_arclen(sl: float) -> tuple[float, float]:
        sl = math.fmod(sl, loop_len)
        half_w = width / 2.0
        cap = math.pi * r
        if sl < width:                      # bottom straight, +x
            lx, ly = -half_w + sl, -r
        elif sl < width + cap:              # right cap
            a = -math.pi / 2.0 + (sl - width) / r
            lx, ly = half_w + r * math.cos(a), r * math.sin(a)
        elif sl < 2.0 * width + cap:        # top straight, -x
            lx, ly = half_w - (sl - width - cap), r
        else:                               # left cap
            a = math.pi / 2.0 + (sl - 2.0 * width - cap) / r
            lx, ly = -half_w + r * math.cos(a), r * math.sin(a)
        return (cx + c * lx - s * ly, cy + s * lx + c * ly)

    samples = []
    t = 0.0
    while True:
        x, y = at_arclen(speed * t)
        samples.append((t, x, y))
        if t >= duration - 1e-12:
            break
        t = min(t + sample_period, duration)
    return BrushTrajectory(Pattern.RECTIRCLE, tuple(samples), f_set, duration)


def trajectory_to_csv(traj: BrushTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y"])
        for t, x, y in traj.samples:
            writer.writerow([f"{t:.4f}", f"{x:.3f}", f"{y:.3f}"])


class PickOutcome(enum.Enum):
    HELD = "Held"
    HEIGHT_MISMATCH = "HeightMismatch"
    SEAL_FAIL = "SealFail"
    DROP_DURING_LIFT = "DropDuringLift"


@dataclass(frozen=True)
class PickResult:
    outcome: PickOutcome
    stop_z: float
    hold_force: float             # N, 0 unless held
    touched_part_id: int | None   # what was actually under the cup
    descent: DescentResult


def _topmost_part_at(scene: SceneState, x: float, y: float) -> PartState | None:
    best: PartState | None = None
    best_h = -math.inf
    for p in scene.resting_parts():
        h = p.top_height_at(np.array([x]), np.array([y]))[0]
        if not math.isnan(h) and h > best_h:
            best, best_h = p, float(h)
    return best


def seal_fraction(scene: SceneState, part: PartState, x: float, y: float,
                  cup_radius: float) -> float:
    """Seal = (1 - porosity) * clamp(exposed flat area under the cup / cup area).

    Porous material never seals fully, but high airflow still pulls a fraction
    of the ideal force, so the seal is graded rather than binary.
    """
    mask = exposed_cell_mask(scene, part)
    grid = part.powder_top
    gx, gy = grid.cell_centers()
    lx, ly = part.world_to_local(np.array([x]), np.array([y]))
    in_cup = (gx - lx[0]) ** 2 + (gy - ly[0]) ** 2 <= cup_radius ** 2
    exposed_area = float((mask & in_cup).sum()) * grid.resolution ** 2
    cup_area = math.pi * cup_radius ** 2
    return (1.0 - part.spec.porosity) * min(1.0, exposed_area / cup_area)


def pick(
    scene: SceneState,
    detection: Detection,
    suction: SuctionModel,
    height_tol: float = 5.0,
    contact_offset: tuple[float, float] = (0.0, 0.0),
    control: ControlConfig | None = None,
    approach_offset: float = 30.0,
    powder_density: float = DEFAULT_POWDER_DENSITY,
    drag_limit: float = 20.0,
    drop_prob: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PickResult:
    """Suction-down pick: guarded descent onto the detection's centroid,
    stop-height verification, seal/hold-force check, monitored lift.

    On success the part's status becomes HELD (removing it from occlusion).
    Every failure outcome is recoverable by the orchestrator.
    """
    control = control or ControlConfig()
    rng = rng or np.random.default_rng(0)
    cx = detection.centroid[0] + contact_offset[0]
    cy = detection.centroid[1] + contact_offset[1]
    expected_z = detection.centroid[2]

    contact = ContactModel(
        surface=lambda px, py: scene.surface_height_at(px, py),
        stiffness=control.stiffness,
        damping=control.damping,
    )
    start = Pose(cx, cy, expected_z + approach_offset)
    descent = compliant_descend(
        start, target_z=-2.0 * height_tol, f_stop=control.f_stop,
        contact=contact, speed=control.descend_speed, dt=control.control_period,
    )
    if not descent.contacted or abs(descent.stop_z - expected_z) > height_tol:
        return PickResult(PickOutcome.HEIGHT_MISMATCH, descent.stop_z, 0.0,
                          None, descent)

    part = _topmost_part_at(scene, cx, cy)
    if part is None:
        return PickResult(PickOutcome.SEAL_FAIL, descent.stop_z, 0.0, None, descent)
    seal = seal_fraction(scene, part, cx, cy, suction.cup_radius)
    hold = suction.hold_force(seal)
    weight = part_total_mass(part, powder_density) * GRAVITY
    if hold < suction.safety_factor * weight:
        return PickResult(PickOutcome.SEAL_FAIL, descent.stop_z, hold, part.id, descent)

    # monitored lift; fault injection can spike the drag mid-ascent
    lift_steps = 40
    spike_at = int(rng.integers(1, lift_steps)) if rng.random() < drop_prob else -1
    lift_trace = [
        FTReading(fx=1.5 * drag_limit if i == spike_at else 0.0, fz=weight)
        for i in range(lift_steps)
    ]
    if not monitor_lift(lift_trace, drag_limit, payload_fz=weight):
        return PickResult(PickOutcome.DROP_DURING_LIFT, descent.stop_z, hold,
                          part.id, descent)

    part.status = PartStatus.HELD
    return PickResult(PickOutcome.HELD, descent.stop_z, hold, part.id, descent)


class CleanOutcome(enum.Enum):
    CLEANED = "Cleaned"
    DROPPED = "DropDuringClean"


@dataclass(frozen=True)
class CleanResult:
    outcome: CleanOutcome
    dust_removed: float           # g, already accounted into the returned part
    in_band_fraction: float
    trace: tuple


def clean(
    part: PartState,
    traj: BrushTrajectory,
    removal: RemovalModel,
    contact: ContactModel,
    brush_point: tuple[float, float] = (0.0, 0.0),
    control: ControlConfig | None = None,
    hold_force: float = math.inf,
    brush_drag_mu: float = 0.8,
    powder_density: float = DEFAULT_POWDER_DENSITY,
    start_z: float | None = None,
) -> CleanResult:
    """Brush the part's downward face along one pattern under force control.

    `traj` is in part-local face coordinates (pattern centered on the part
    centroid); the cup path is its mirror about the fixed brush point. Powder
    leaves cells inside the brush disc per 100 ms dwell pass; removed mass is
    returned for the scene's dust ledger. Mass is conserved exactly.
    """
    if part.status is not PartStatus.HELD:
        raise ValueError("clean requires a held part")
    control = control or ControlConfig()
    bx, by = brush_point
    cup_path = [(t, bx - x, by - y) for t, x, y in traj.samples]

    if start_z is None:
        descent = compliant_descend(
            Pose(cup_path[0][1], cup_path[0][2], contact.height(bx, by) + 30.0),
            target_z=contact.height(bx, by) - 5.0,
            f_stop=traj.f_set, contact=contact,
            speed=control.descend_speed, dt=control.control_period,
        )
        start_z = descent.stop_z

    result = hybrid_track(
        cup_path, f_set=traj.f_set, band=control.force_band, contact=contact,
        gain_dt=control.gain_dt, dt=control.control_period, start_z=start_z,
        contact_lost_dwell=control.contact_lost_dwell,
    )

    grid = part.powder_bottom
    cells = np.array(grid.cells)
    gx, gy = grid.cell_centers()
    removed_volume = 0.0
    dropped_at: float | None = None
    n_buckets = max(1, int(math.ceil(traj.duration / removal.pass_dwell)))
    trace = result.trace
    for bucket in range(n_buckets):
        t0 = bucket * removal.pass_dwell
        t1 = min((bucket + 1) * removal.pass_dwell, traj.duration)
        window = [s for s in trace if t0 <= s[0] < t1] or [trace[-1]]
        fz = float(np.mean([r.fz for _, _, r in window]))
        if brush_drag_mu * fz > hold_force:
            dropped_at = t0
            break
        # brush point in part-local face coordinates at the bucket midpoint
        mid = window[len(window) // 2]
        px, py = bx - mid[1].x, by - mid[1].y
        rho = removal.rho_max * min(1.0, max(0.0, fz / removal.f_ref))
        if rho <= 0.0:
            continue
        disc = (gx - px) ** 2 + (gy - py) ** 2 <= removal.brush_radius ** 2
        before = cells[disc].sum()
        cells[disc] *= 1.0 - rho
        removed_volume += (before - cells[disc].sum()) * grid.resolution ** 2

    part.powder_bottom = grid.with_cells(cells)
    dust = removed_volume * powder_density
    outcome = CleanOutcome.DROPPED if dropped_at is not None else CleanOutcome.CLEANED
    return CleanResult(outcome=outcome, dust_removed=dust,
                       in_band_fraction=result.in_band_fraction, trace=trace)


def flip(
    scene: SceneState,
    part: PartState,
    flat_threshold: float = 0.3,
    spill_fraction: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PartState:
    """Drop the held part through the passive flipping station: it lands in
    the flip collection area with the other face up.

    face_up toggles, the powder fields swap, and yaw is mirrored about the
    station axis. Only works for flat parts; tall ones jam the sliders.
    """
    if part.status is not PartStatus.HELD:
        raise ValueError("flip requires a held part")
    ratio = part.spec.flatness_ratio
    if ratio > flat_threshold:
        raise NotFlippable(
            f"flatness ratio {ratio:.3f} exceeds threshold {flat_threshold:.3f}"
        )
    rng = rng or np.random.default_rng(0)
    part.face_up = not part.face_up
    part.powder_top, part.powder_bottom = part.powder_bottom, part.powder_top

    if spill_fraction > 0.0:
        grid = part.powder_bottom
        cells = np.array(grid.cells)
        spilled_volume = cells.sum() * spill_fraction * grid.resolution ** 2
        cells *= 1.0 - spill_fraction
        part.powder_bottom = grid.with_cells(cells)
        scene.flip_area_spill += spilled_volume * DEFAULT_POWDER_DENSITY

    fx, fy = scene.flip_area.centroid()
    jx = float(rng.uniform(-10.0, 10.0))
    jy = float(rng.uniform(-10.0, 10.0))
    landing = Pose(fx + jx, fy + jy, 0.0, normalize_yaw(math.pi - part.pose.yaw))
    others = [p for p in scene.resting_parts() if p.id != part.id]
    z = support_height(part.spec.footprint.transformed(landing), others)
    part.pose = Pose(landing.x, landing.y, z, landing.yaw)
    part.status = PartStatus.ON_FLIP_AREA
    return part


def place(
    scene: SceneState,
    part: PartState,
    target: Polygon2,
    rng: np.random.Generator | None = None,
    tries: int = 20,
) -> PartState:
    """Release the held part with its centroid inside the target polygon,
    preferring a slot that does not overlap parts already placed; stacking is
    permitted once the tries run out."""
    if part.status is not PartStatus.HELD:
        raise ValueError("place requires a held part")
    rng = rng or np.random.default_rng(0)
    xmin, ymin, xmax, ymax = target.bbox()
    others = [p for p in scene.resting_parts()
              if p.id != part.id and p.status is PartStatus.DONE]
    chosen: Pose | None = None
    for _ in range(max(1, tries)):
        x = float(rng.uniform(xmin, xmax))
        y = float(rng.uniform(ymin, ymax))
        if not point_in_polygon((x, y), target):
            continue
        pose = Pose(x, y, 0.0, part.pose.yaw)
        fp = part.spec.footprint.transformed(pose)
        if not any(polygons_overlap(fp, o.world_footprint()) for o in others):
            chosen = pose
            break
    if chosen is None:
        cx, cy = target.centroid()
        chosen = Pose(cx, cy, 0.0, part.pose.yaw)
    fp = part.spec.footprint.transformed(chosen)
    z = support_height(fp, others)
    part.pose = Pose(chosen.x, chosen.y, z, chosen.yaw)
    part.status = PartStatus.DONE
    return part
