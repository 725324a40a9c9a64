"""End-effector force control against a spring-damper environment.

The real robot is position-controlled; compliance is synthesized in software
above the stiff position loop. Guarded descent terminates on a force
threshold; hybrid tracking regulates force along the contact normal (z) via
an admittance law while x/y follow the commanded path exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import ContactFault, ContactLost
from .geometry import Pose


@dataclass(frozen=True)
class FTReading:
    """Six-axis force-torque sample: N and N*mm."""

    fx: float = 0.0
    fy: float = 0.0
    fz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        for v in (self.fx, self.fy, self.fz, self.tx, self.ty, self.tz):
            if not math.isfinite(v):
                raise ValueError("force-torque reading must be finite")


@dataclass
class EndEffectorState:
    """Simulated effector: pose plus the motion limits the cell runs at."""

    pose: Pose = field(default_factory=Pose)
    speed_limit: float = 250.0    # mm/s
    control_period: float = 0.004  # s

    def __post_init__(self):
        if self.speed_limit <= 0.0:
            raise ValueError("speed limit must be > 0")
        if self.control_period <= 0.0:
            raise ValueError("control period must be > 0")


@dataclass(frozen=True)
class ContactModel:
    """Spring-damper environment: surface(x, y) -> height in mm, or None where
    the move is laterally obstructed (no defined contact surface)."""

    surface: Callable[[float, float], float | None]
    stiffness: float = 10.0   # N/mm
    damping: float = 0.0      # N*s/mm

    def __post_init__(self):
        if self.stiffness <= 0.0:
            raise ValueError("stiffness must be > 0")
        if self.damping < 0.0:
            raise ValueError("damping must be >= 0")

    def height(self, x: float, y: float) -> float:
        h = self.surface(x, y)
        if h is None or (isinstance(h, float) and math.isnan(h)):
            raise ContactFault(f"no contact surface at ({x:.1f}, {y:.1f})")
        return float(h)


def flat_surface(height: float) -> ContactModel:
    return ContactModel(surface=lambda x, y: height)


@dataclass(frozen=True)
class DescentResult:
    stop_z: float
    contacted: bool
    trace: tuple[FTReading, ...]


def compliant_descend(
    start: Pose,
    target_z: float,
    f_stop: float,
    contact: ContactModel,
    speed: float = 20.0,
    dt: float = 0.004,
) -> DescentResult:
    """Guarded move down: descend in fixed steps until the normal force
    reaches f_stop (contacted) or target_z is reached (no contact).

    Force while penetrating is k*penetration + c*speed, so the trigger
    overshoot is bounded by one step of spring load plus the viscous term:
    fz_stop - f_stop <= k*speed*dt + c*speed.
    """
    if f_stop < 0.0:
        raise ValueError("f_stop must be >= 0")
    if start.z <= target_z:
        raise ValueError("start must be above target_z")
    x, y = start.x, start.y
    h = contact.height(x, y)
    z = start.z
    trace: list[FTReading] = []
    while True:
        z = max(z - speed * dt, target_z)
        penetration = h - z
        if penetration > 0.0:
            fz = contact.stiffness * penetration + contact.damping * speed
        else:
            fz = 0.0
        trace.append(FTReading(fz=fz))
        if penetration > 0.0 and fz >= f_stop:
            return DescentResult(stop_z=z, contacted=True, trace=tuple(trace))
        if z <= target_z:
            return DescentResult(stop_z=target_z, contacted=False, trace=tuple(trace))


@dataclass(frozen=True)
class TrackResult:
    trace: tuple[tuple[float, Pose, FTReading], ...]  # (t, pose, reading)
    in_band_fraction: float
    settle_steps: int


def settle_step_count(initial_error: float, band: float, gain_dt: float) -> int:
    """Steps for the admittance recursion |e_{n+1}| = |1 - g*dt| |e_n| to
    bring |e| inside the band."""
    e0 = abs(initial_error)
    if e0 <= band:
        return 0
    decay = abs(1.0 - gain_dt)
    if decay <= 0.0:
        return 1
    if decay >= 1.0:
        raise ValueError("gain_dt must keep |1 - g*dt| < 1 to converge")
    return int(math.ceil(math.log(band / e0) / math.log(decay)))


def hybrid_track(
    path: list[tuple[float, float, float]],
    f_set: float,
    band: float,
    contact: ContactModel,
    gain_dt: float = 0.3,
    dt: float = 0.004,
    start_z: float | None = None,
    contact_lost_dwell: float = 0.2,
    settle_steps: int | None = None,
) -> TrackResult:
    """Hybrid force/position tracking: (x, y) follow the timed path exactly,
    z runs the admittance law z -= g*dt*(f_set - fz)/k.

    On a flat surface the force error decays geometrically with factor
    |1 - g*dt|. Returns the fraction of post-settle samples with
    |fz - f_set| <= band.
    """
    if f_set <= 0.0:
        raise ValueError("f_set must be > 0")
    if not path:
        raise ValueError("path must be non-empty")
    if not 0.0 < gain_dt < 2.0:
        raise ValueError("gain_dt must be in (0, 2) for a stable loop")
    k = contact.stiffness
    times = [p[0] for p in path]
    duration = times[-1]
    n_steps = max(1, int(round(duration / dt)))
    x0, y0 = path[0][1], path[0][2]
    z = (contact.height(x0, y0) - f_set / k) if start_z is None else start_z

    lost_limit = max(1, int(round(contact_lost_dwell / dt)))
    lost_streak = 0
    trace: list[tuple[float, Pose, FTReading]] = []
    seg = 0
    first_error: float | None = None
    for n in range(n_steps + 1):
        t = min(n * dt, duration)
        while seg + 1 < len(path) and times[seg + 1] < t:
            seg += 1
        if seg + 1 < len(path):
            t0, xa, ya = path[seg]
            t1, xb, yb = path[seg + 1]
            frac = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
            x, y = xa + frac * (xb - xa), ya + frac * (yb - ya)
        else:
            _, x, y = path[-1]
        h = contact.height(x, y)
        penetration = h - z
        fz = k * penetration if penetration > 0.0 else 0.0
        if fz <= 0.0:
            lost_streak += 1
            if lost_streak > lost_limit:
                raise ContactLost(f"no contact for {lost_streak * dt:.3f} s at t={t:.3f}")
        else:
            lost_streak = 0
        trace.append((t, Pose(x, y, z), FTReading(fz=fz)))
        if first_error is None:
            first_error = f_set - fz
        z -= gain_dt * (f_set - fz) / k

    if settle_steps is None:
        settle_steps = settle_step_count(first_error or 0.0, band, gain_dt)
    steady = trace[min(settle_steps, len(trace) - 1):]
    in_band = sum(1 for _, _, r in steady if abs(r.fz - f_set) <= band)
    return TrackResult(
        trace=tuple(trace),
        in_band_fraction=in_band / len(steady) if steady else 1.0,
        settle_steps=settle_steps,
    )


def monitor_lift(
    trace: list[FTReading] | tuple[FTReading, ...],
    drag_limit: float,
    payload_fz: float = 0.0,
) -> bool:
    """True iff the part was retained: no reading exceeds the drag limit
    beyond the expected payload weight (strictly greater triggers)."""
    for r in trace:
        drag = max(abs(r.fx), abs(r.fy), abs(r.fz - payload_fz))
        if drag > drag_limit:
            return False
    return True


def trace_to_csv(trace, path: str | Path) -> None:
    """Dump a hybrid_track trace as CSV (t, x, y, z, fx, fy, fz)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z", "fx", "fy", "fz"])
        for t, pose, r in trace:
            writer.writerow([f"{t:.6f}", f"{pose.x:.3f}", f"{pose.y:.3f}",
                             f"{pose.z:.4f}", f"{r.fx:.4f}", f"{r.fy:.4f}", f"{r.fz:.4f}"])
