import json
import math

import numpy as np
import pytest

from decake.config import SimConfig
from decake.errors import NoSuchPart, SceneOverflow
from decake.geometry import Pose, grid_integrate, point_in_polygon
from decake.scene import (
    exposed_top_area,
    insole_footprint,
    part_total_mass,
    powder_field,
    scene_from_dict,
    scene_generate,
    scene_to_dict,
    scene_total_mass,
    support_height,
)

from conftest import make_part, make_rect_footprint, make_scene


class TestSceneGenerate:
    def test_ten_part_batch_matches_calibration_targets(self, cfg):
        scene = scene_generate(42, 10, powder_mass_mean=26.2, powder_mass_sd=8.0,
                               cfg=cfg)
        assert len(scene.parts) == 10
        masses = [part_total_mass(p, cfg.scene.powder_density) for p in scene.parts]
        # mean total = clean 22.4 + powder 26.2, within sampling noise of sd 8
        assert np.mean(masses) == pytest.approx(48.6, abs=5.0)
        for p in scene.parts:
            assert all(point_in_polygon(v, scene.bin)
                       for v in p.world_footprint().vertices)

    def test_empty_scene(self, cfg):
        scene = scene_generate(1, 0, cfg=cfg)
        assert scene.parts == []
        assert scene.dust_collected == 0.0

    def test_determinism_byte_identical(self, cfg):
        a = scene_generate(123, 6, cfg=cfg)
        b = scene_generate(123, 6, cfg=cfg)
        assert json.dumps(scene_to_dict(a), sort_keys=True) == \
            json.dumps(scene_to_dict(b), sort_keys=True)

    def test_different_seeds_differ(self, cfg):
        a = scene_generate(1, 3, cfg=cfg)
        b = scene_generate(2, 3, cfg=cfg)
        assert scene_to_dict(a) != scene_to_dict(b)

    def test_settle_rule_exact(self, cfg):
        scene = scene_generate(42, 10, cfg=cfg)
        for i, p in enumerate(scene.parts):
            below = scene.parts[:i]
            assert p.pose.z == support_height(p.world_footprint(), below)

    def test_overflow_when_bin_too_small(self, cfg):
        cfg.workcell.bin_rect = [0.0, 0.0, 100.0, 100.0]  # insole cannot fit
        with pytest.raises(SceneOverflow):
            scene_generate(5, 1, cfg=cfg)

    def test_negative_parts_rejected(self, cfg):
        with pytest.raises(ValueError):
            scene_generate(0, -1, cfg=cfg)


class TestPartMass:
    def test_zero_powder_is_clean_mass(self):
        part = make_part(0, insole_footprint())
        assert part_total_mass(part) == pytest.approx(22.4)

    def test_13_1_grams_per_face(self, cfg):
        fp = insole_footprint()
        rng = np.random.default_rng(0)
        top = powder_field(fp, 2.0, 13.1, cfg.scene.powder_density, rng)
        bottom = powder_field(fp, 2.0, 13.1, cfg.scene.powder_density, rng)
        part = make_part(0, fp)
        part.powder_top, part.powder_bottom = top, bottom
        assert part_total_mass(part, cfg.scene.powder_density) == pytest.approx(
            48.6, abs=1e-9)

    def test_negative_cell_impossible(self):
        part = make_part(0, insole_footprint(), depth_top=1.0)
        with pytest.raises(ValueError):
            part.powder_top.with_cells(part.powder_top.cells - 2.0)

    def test_powder_field_mass_exact(self, cfg):
        fp = make_rect_footprint(100, 40)
        f = powder_field(fp, 2.0, 7.77, cfg.scene.powder_density,
                         np.random.default_rng(5))
        assert grid_integrate(f) * cfg.scene.powder_density == pytest.approx(
            7.77, abs=1e-12)


class TestExposedTopArea:
    def test_isolated_part_full_footprint(self):
        # 250x80 rectangle aligned to the 2 mm grid: exactly 20000 mm^2
        part = make_part(0, make_rect_footprint(250, 80), Pose(-200, -100))
        scene = make_scene([part])
        assert exposed_top_area(scene, 0) == pytest.approx(20000.0)

    def test_fully_covered_is_zero(self):
        a = make_part(0, make_rect_footprint(100, 40), Pose(-200, -100, 0))
        b = make_part(1, make_rect_footprint(120, 60), Pose(-200, -100, 10))
        scene = make_scene([a, b])
        assert exposed_top_area(scene, 0) == 0.0

    def test_thirty_percent_overlap_cell_count_oracle(self):
        # B rests on A covering A-local x in [20, 50]: 30% of the 100x40 footprint
        a = make_part(0, make_rect_footprint(100, 40), Pose(-200, -100, 0))
        b = make_part(1, make_rect_footprint(100, 40), Pose(-200 + 70, -100, 10))
        scene = make_scene([a, b])
        # independent cell-count oracle over A's grid
        grid = a.powder_top
        count = 0
        ny, nx = grid.shape
        for iy in range(ny):
            for ix in range(nx):
                x = grid.origin[0] + (ix + 0.5) * grid.resolution  # A-local
                y = grid.origin[1] + (iy + 0.5) * grid.resolution
                if abs(x) <= 50 and abs(y) <= 20 and not (20 <= x <= 50):
                    count += 1
        oracle = count * grid.resolution ** 2
        measured = exposed_top_area(scene, 0)
        assert measured == pytest.approx(oracle)
        assert measured == pytest.approx(0.7 * 4000.0, abs=80.0)  # one cell-row

    def test_unknown_id(self):
        scene = make_scene([make_part(0, make_rect_footprint(100, 40))])
        with pytest.raises(NoSuchPart):
            exposed_top_area(scene, 99)


class TestMassConservationInvariants:
    def test_total_includes_dust_and_spill(self, cfg):
        scene = scene_generate(9, 3, cfg=cfg)
        base = scene_total_mass(scene, cfg.scene.powder_density)
        scene.dust_collected += 5.0
        assert scene_total_mass(scene, cfg.scene.powder_density) == pytest.approx(
            base + 5.0)


class TestSerialization:
    def test_round_trip_lossless(self, cfg):
        scene = scene_generate(77, 4, cfg=cfg)
        blob = json.dumps(scene_to_dict(scene), sort_keys=True)
        again = scene_from_dict(json.loads(blob))
        assert json.dumps(scene_to_dict(again), sort_keys=True) == blob
        assert scene_total_mass(again) == scene_total_mass(scene)

    def test_schema_keys(self, cfg):
        doc = scene_to_dict(scene_generate(1, 2, cfg=cfg))
        assert set(doc) >= {"seed", "bin", "parts", "dust_collected"}
        part = doc["parts"][0]
        assert set(part) == {"id", "footprint", "thickness", "clean_mass",
                             "porosity", "pose", "face_up", "powder_top",
                             "powder_bottom", "status"}


class TestFootprints:
    def test_insole_flatness(self):
        fp = insole_footprint(250, 80)
        part = make_part(0, fp, thickness=10.0)
        assert part.spec.flatness_ratio == pytest.approx(10.0 / 80.0)

    def test_insole_centered(self):
        fp = insole_footprint()
        cx, cy = fp.centroid()
        assert abs(cx) < 1e-9 and abs(cy) < 1e-9
