"""Configuration for the decaking cell.

Every tunable named in the module design notes lives here, grouped per
subsystem, with the calibrated defaults. Values load from a TOML file whose
tables mirror the dataclasses below; unknown keys are hard errors so typos
never silently fall back to defaults.

Units: mm, grams, seconds, newtons, kPa. powder_density is g/mm^3.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from .errors import ConfigError


@dataclass
class SceneConfig:
    grid_resolution: float = 2.0          # mm per powder/depth cell
    powder_density: float = 5.5e-4        # g/mm^3 (0.55 mg/mm^3); depths land at O(1 mm)
    powder_split_top: float = 0.5         # fraction of powder mass on the up face
    powder_noise_amplitude: float = 0.5   # +/- relative variation of the depth field
    spill_fraction: float = 0.0           # powder shed into the flip area per flip
    clean_mass: float = 22.4              # g, perfectly cleaned insole
    porosity: float = 0.3                 # suction seal degradation of the material
    part_thickness: float = 10.0          # mm
    part_length: float = 250.0            # mm, insole footprint extent
    part_width: float = 80.0              # mm
    powder_mass_mean: float = 26.2        # g per part (both faces together)
    powder_mass_sd: float = 8.0           # g
    placement_tries: int = 1000           # rejection-sampling budget per part


@dataclass
class WorkcellConfig:
    # rectangles are [xmin, ymin, xmax, ymax] on the table plane (z = 0)
    bin_rect: list = field(default_factory=lambda: [-400.0, -300.0, 0.0, 100.0])
    bin_wall_height: float = 150.0
    bin_wall_thickness: float = 20.0
    flip_area_rect: list = field(default_factory=lambda: [500.0, 20.0, 700.0, 200.0])
    destination_rect: list = field(default_factory=lambda: [700.0, -300.0, 920.0, 0.0])
    brush_station_box: list = field(
        default_factory=lambda: [150.0, 250.0, 0.0, 450.0, 500.0, 200.0]
    )  # [xmin, ymin, zmin, xmax, ymax, zmax]; rack top = zmax
    brush_area_rect: list = field(default_factory=lambda: [180.0, 280.0, 420.0, 470.0])
    flipper_box: list = field(
        default_factory=lambda: [500.0, 250.0, 0.0, 700.0, 500.0, 220.0]
    )
    bounds_box: list = field(
        default_factory=lambda: [-450.0, -350.0, 0.0, 950.0, 650.0, 550.0]
    )
    hover_z: float = 380.0                # transit height for all planned moves
    approach_offset: float = 30.0         # guarded descent starts this far above target


@dataclass
class PerceptionConfig:
    recall: float = 0.967
    precision: float = 0.975
    confidence_threshold: float = 0.95
    true_confidence: list = field(default_factory=lambda: [0.95, 1.0])
    spurious_confidence: list = field(default_factory=lambda: [0.90, 0.99])
    spurious_mask_cells: list = field(default_factory=lambda: [5, 20])
    spurious_z_offset: list = field(default_factory=lambda: [0.0, 40.0])
    floating_tolerance: float = 10.0      # mm between centroid z and supporting render


@dataclass
class ControlConfig:
    stiffness: float = 10.0               # N/mm brush + mount compliance
    damping: float = 0.0                  # N*s/mm
    control_period: float = 0.004         # s
    descend_speed: float = 20.0           # mm/s
    f_stop: float = 5.0                   # N guarded-descent threshold
    f_set: float = 5.0                    # N brushing normal-force setpoint
    force_band: float = 1.0               # N in-band half width
    gain_dt: float = 0.3                  # admittance g*dt, must sit in (0, 1)
    contact_lost_dwell: float = 0.2       # s of zero force before ContactLost
    speed_limit: float = 250.0            # mm/s end-effector cap (robot at 50%)


@dataclass
class SuctionConfig:
    cup_radius: float = 15.0              # mm
    vacuum_differential: float = 20.0     # kPa
    safety_factor: float = 2.0            # hold force >= safety * weight
    height_tol: float = 5.0               # mm stop-height verification window
    drag_limit: float = 20.0              # N, lift aborts above this drag
    drop_during_lift_prob: float = 0.0    # fault injection
    brush_drag_mu: float = 0.8            # tangential drag = mu * normal force


@dataclass
class CleaningConfig:
    spiral_time: float = 5.0              # s per face
    rectircle_time: float = 5.0           # s per face
    path_speed: float = 100.0             # mm/s tangential
    sample_period: float = 0.02           # s between path samples
    spiral_pitch: float = 30.0            # mm per turn
    spiral_r_max: float = 35.0            # mm
    rectircle_width: float = 170.0        # mm straight-segment length
    rectircle_height: float = 50.0        # mm cap diameter
    rho_max: float = 0.065                # removal fraction per pass, fitted once to the
                                          # 42% mean-removal target at 20 s brushing/part
    f_ref: float = 5.0                    # N force normalization for removal
    brush_radius: float = 25.0            # mm effective brush contact disc
    pass_dwell: float = 0.1               # s per removal pass bucket


@dataclass
class PlannerConfig:
    step: float = 10.0                    # mm extend step
    goal_bias: float = 0.1
    max_iters: int = 2000
    shortcut_iters: int = 100
    collision_resolution: float = 1.0     # mm sampling along segments


@dataclass
class DurationsConfig:
    """Charged wall-clock seconds per action; calibrated so a fault-free part
    cycle sums to 50 s with 20 s of brushing. flip_drop includes the short hop
    from the adjacent cleaning station."""

    localize: float = 2.0
    transit: float = 3.0
    pick: float = 4.0
    clean: float = 10.0
    flip_drop: float = 2.0
    place: float = 3.0


@dataclass
class OrchestratorConfig:
    max_retries: int = 2
    flat_threshold: float = 0.3           # thickness / min-extent flip limit
    select_area_weight: float = 0.5       # alpha in the next-part score
    select_height_weight: float = 0.5     # beta
    place_tries: int = 20                 # non-overlapping slots before stacking
    durations: DurationsConfig = field(default_factory=DurationsConfig)


@dataclass
class SimConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    workcell: WorkcellConfig = field(default_factory=WorkcellConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    suction: SuctionConfig = field(default_factory=SuctionConfig)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    orchestrator: OrchestratorConfig = field(default_factory=OrchestratorConfig)


def default_config() -> SimConfig:
    return SimConfig()


def _apply(obj, data: dict, path: str):
    valid = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in valid:
            raise ConfigError(f"unknown configuration key: {where}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table")
            _apply(current, value, where)
        elif isinstance(current, list):
            if not isinstance(value, list):
                raise ConfigError(f"{where} must be an array")
            setattr(obj, key, [type(c)(v) for c, v in zip(current, value)]
                    if len(value) == len(current) else list(value))
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where} must be a boolean")
            setattr(obj, key, value)
        elif isinstance(current, int) and not isinstance(current, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where} must be an integer")
            setattr(obj, key, value)
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where} must be a number")
            setattr(obj, key, float(value))
        else:
            setattr(obj, key, value)


def config_from_dict(data: dict) -> SimConfig:
    cfg = SimConfig()
    _apply(cfg, data, "")
    return cfg


def load_config(path: str | Path) -> SimConfig:
    """Parse a TOML config file, rejecting unknown keys."""
    raw = Path(path).read_bytes()
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)
