import numpy as np
import pytest

from decake.config import SimConfig
from decake.geometry import GridField, Polygon2, Pose
from decake.scene import (
    PartSpec,
    PartState,
    PartStatus,
    SceneState,
    footprint_grid,
    rect_polygon,
)


@pytest.fixture
def cfg() -> SimConfig:
    return SimConfig()


def make_rect_footprint(length: float, width: float) -> Polygon2:
    """Axis-aligned rectangle centered at the origin."""
    hl, hw = length / 2.0, width / 2.0
    return Polygon2(((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)))


def make_part(
    part_id: int,
    footprint: Polygon2,
    pose: Pose = Pose(),
    depth_top: float = 0.0,
    depth_bottom: float = 0.0,
    thickness: float = 10.0,
    clean_mass: float = 22.4,
    porosity: float = 0.3,
    resolution: float = 2.0,
    status: PartStatus = PartStatus.IN_BIN,
) -> PartState:
    """Part with spatially uniform powder depth on each face."""
    spec = PartSpec(footprint=footprint, thickness=thickness,
                    clean_mass=clean_mass, porosity=porosity)
    grid, mask = footprint_grid(footprint, resolution)
    top = grid.with_cells(np.where(mask, depth_top, 0.0))
    bottom = grid.with_cells(np.where(mask, depth_bottom, 0.0))
    return PartState(id=part_id, spec=spec, pose=pose, face_up=True,
                     powder_top=top, powder_bottom=bottom, status=status)


def make_scene(parts, cfg: SimConfig | None = None, seed: int = 0) -> SceneState:
    cfg = cfg or SimConfig()
    wc = cfg.workcell
    scene = SceneState(
        bin=rect_polygon(*wc.bin_rect),
        bin_wall_height=wc.bin_wall_height,
        flip_area=rect_polygon(*wc.flip_area_rect),
        destination=rect_polygon(*wc.destination_rect),
        rng_seed=seed,
    )
    scene.parts.extend(parts)
    return scene
