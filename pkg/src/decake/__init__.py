"""decake: deterministic simulator and orchestration library for an automated
decaking workcell — pick, brush-clean, flip, clean, place — with calibrated
perception errors, compliant force control, coverage brushing paths,
RRT-Connect transit planning, and full mass accounting.
"""

from .config import SimConfig, default_config, load_config
from .control import (
    ContactModel,
    EndEffectorState,
    FTReading,
    compliant_descend,
    flat_surface,
    hybrid_track,
    monitor_lift,
)
from .errors import (
    ConfigError,
    ContactFault,
    ContactLost,
    DecakeError,
    InvalidPolygon,
    InvalidQuery,
    NoSuchPart,
    NotFlippable,
    SceneOverflow,
    SensorBusy,
    Unreachable,
)
from .geometry import (
    Aabb3,
    GridField,
    Polygon2,
    Pose,
    grid_integrate,
    point_in_polygon,
    polygon_area,
)
from .orchestrator import (
    CellState,
    DecakeCell,
    FailureKind,
    Policy,
    Strategy,
    run,
    run_batch,
    select_next_part,
    set_brushing_budget,
)
from .perception import (
    Detection,
    DetectorModel,
    DepthImage,
    SensorMode,
    detect,
    estimate_pose,
    render_depth,
    write_pgm,
)
from .planner import PlannedPath, Workspace, plan, segment_free
from .primitives import (
    BrushTrajectory,
    CleanOutcome,
    Pattern,
    PickOutcome,
    RemovalModel,
    SuctionModel,
    clean,
    flip,
    pick,
    place,
    rectircle_path,
    spiral_path,
)
from .report import ActionLog, RunReport, human_baseline
from .scene import (
    PartSpec,
    PartState,
    PartStatus,
    SceneState,
    exposed_top_area,
    insole_footprint,
    load_scene,
    part_total_mass,
    save_scene,
    scene_generate,
    scene_total_mass,
)

__version__ = "0.1.0"
