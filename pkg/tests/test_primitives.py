import json
import math

import numpy as np
import pytest

from decake.config import ControlConfig, SimConfig
from decake.control import flat_surface
from decake.errors import NotFlippable
from decake.geometry import Aabb3, Pose, grid_integrate, point_in_polygon
from decake.perception import Detection, detect, render_depth, DetectorModel
from decake.primitives import (
    CleanOutcome,
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
from decake.scene import (
    PartStatus,
    part_total_mass,
    scene_to_dict,
    scene_total_mass,
)

from conftest import make_part, make_rect_footprint, make_scene


def path_radii(traj, center=(0.0, 0.0)):
    return [math.hypot(x - center[0], y - center[1]) for _, x, y in traj.samples]


def polyline_length(traj):
    pts = [(x, y) for _, x, y in traj.samples]
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))


class TestSpiralPath:
    def test_theta_end_closed_form(self):
        # spiral phase ends at theta = 2*pi*r_max/pitch = 8*pi for pitch 5, r 20
        pitch, r_max, speed, period = 5.0, 20.0, 50.0, 0.01
        traj = spiral_path((0, 0), pitch, r_max, speed, duration=30.0,
                           sample_period=period)
        radii = path_radii(traj)
        # accumulate the turned angle independently from the samples
        theta = 0.0
        prev = None
        theta_at_rmax = None
        for (t, x, y), r in zip(traj.samples, radii):
            ang = math.atan2(y, x)
            if prev is not None:
                d = ang - prev
                while d > math.pi:
                    d -= 2 * math.pi
                while d < -math.pi:
                    d += 2 * math.pi
                theta += d
            prev = ang
            if theta_at_rmax is None and r >= r_max - 1e-9:
                theta_at_rmax = theta
        expected = 2 * math.pi * r_max / pitch
        step_angle = speed * period / r_max  # one sample of angle at r_max
        assert theta_at_rmax == pytest.approx(expected, abs=2 * step_angle)

    def test_one_turn_when_pitch_equals_rmax(self):
        traj = spiral_path((0, 0), 20.0, 20.0, 50.0, duration=10.0,
                           sample_period=0.005)
        radii = path_radii(traj)
        theta_end = 2 * math.pi * 20.0 / 20.0
        assert theta_end == pytest.approx(2 * math.pi)
        idx = next(i for i, r in enumerate(radii) if r >= 20.0 - 1e-9)
        # reached r_max after one full turn of path: arc length of one turn
        assert traj.samples[idx][0] * 50.0 == pytest.approx(
            math.pi * 20.0, rel=0.1)  # ~ half-circumference-scale arc length

    def test_radii_bounded_and_monotone_in_spiral_phase(self):
        speed, period = 80.0, 0.02
        traj = spiral_path((5, -3), 6.0, 25.0, speed, duration=8.0,
                           sample_period=period)
        radii = path_radii(traj, center=(5, -3))
        eps = speed * period
        assert all(r <= 25.0 + eps for r in radii)
        spiral_phase = [r for r in radii if r < 25.0 - 1e-9]
        assert all(b >= a - 1e-9 for a, b in zip(spiral_phase, spiral_phase[1:]))

    def test_constant_tangential_speed(self):
        speed, period = 60.0, 0.01
        traj = spiral_path((0, 0), 10.0, 30.0, speed, duration=6.0,
                           sample_period=period)
        pts = traj.samples
        steps = [math.hypot(b[1] - a[1], b[2] - a[2]) for a, b in zip(pts[1:], pts[2:])]
        assert np.mean(steps) == pytest.approx(speed * period, rel=0.05)


class TestRectirclePath:
    def test_loop_length_closed_form(self):
        # stadium perimeter 2W + pi*H = 142.832 for W=40, H=20
        traj = rectircle_path((0, 0), 40.0, 20.0, 0.0, speed=50.0,
                              sample_period=0.001)
        expected = 2 * 40.0 + math.pi * 20.0
        assert polyline_length(traj) == pytest.approx(expected, rel=0.001)

    def test_zero_width_is_circle(self):
        traj = rectircle_path((0, 0), 0.0, 20.0, 0.0, speed=50.0,
                              sample_period=0.001)
        assert polyline_length(traj) == pytest.approx(math.pi * 20.0, rel=0.001)
        radii = path_radii(traj)
        assert all(r == pytest.approx(10.0, abs=0.01) for r in radii)

    def test_direction_rotates_bbox(self):
        flat = rectircle_path((0, 0), 40.0, 20.0, 0.0, speed=50.0)
        turned = rectircle_path((0, 0), 40.0, 20.0, math.pi / 2, speed=50.0)

        def extents(traj):
            xs = [x for _, x, y in traj.samples]
            ys = [y for _, x, y in traj.samples]
            return (max(xs) - min(xs), max(ys) - min(ys))

        fx, fy = extents(flat)
        tx, ty = extents(turned)
        assert (fx, fy) == pytest.approx((ty, tx), abs=0.5)

    def test_loop_closure(self):
        speed, period = 50.0, 0.02
        traj = rectircle_path((3, 7), 40.0, 20.0, 0.3, speed=speed,
                              sample_period=period)
        t0, x0, y0 = traj.samples[0]
        t1, x1, y1 = traj.samples[-1]
        assert math.hypot(x1 - x0, y1 - y0) <= speed * period + 1e-9

    def test_time_monotone(self):
        traj = rectircle_path((0, 0), 40.0, 20.0, 0.0, speed=50.0, duration=3.33)
        ts = [t for t, _, _ in traj.samples]
        assert all(b >= a for a, b in zip(ts, ts[1:]))
        assert ts[-1] == pytest.approx(3.33)


def _isolated_scene(porosity=0.4, depth_top=0.6, depth_bottom=0.6):
    part = make_part(0, make_rect_footprint(100, 60), Pose(-200, -100),
                     depth_top=depth_top, depth_bottom=depth_bottom,
                     porosity=porosity)
    scene = make_scene([part])
    return scene, part


def _detection_for(scene):
    depth = render_depth(scene, scene.bin)
    model = DetectorModel(recall=1.0, precision=1.0, rng=np.random.default_rng(0))
    return detect(scene, depth, model)[0]


class TestPick:
    def test_hold_force_arithmetic_and_held(self):
        # seal = (1-0.4)*1.0 = 0.6 -> F = 0.6 * 20 kPa * pi * 15^2 mm^2 ~ 8.48 N
        scene, part = _isolated_scene(porosity=0.4)
        det = _detection_for(scene)
        suction = SuctionModel(cup_radius=15.0, vacuum_differential=20.0,
                               safety_factor=2.0)
        res = pick(scene, det, suction, height_tol=5.0)
        assert res.outcome is PickOutcome.HELD
        assert res.hold_force == pytest.approx(8.482, abs=0.05)
        assert part.status is PartStatus.HELD

    def test_fully_porous_seal_fails(self):
        scene, part = _isolated_scene(porosity=1.0)
        det = _detection_for(scene)
        res = pick(scene, det, SuctionModel())
        assert res.outcome is PickOutcome.SEAL_FAIL
        assert res.hold_force == 0.0
        assert part.status is PartStatus.IN_BIN

    def test_spurious_detection_over_floor_height_mismatch(self):
        scene = make_scene([])
        mask = frozenset((10, 10 + i) for i in range(10))
        det = Detection(part_id_hypothesis=None, mask=mask, confidence=0.99,
                        centroid=(-200.0, -100.0, 30.0),
                        bbox=Aabb3((-210, -110, 0), (-190, -90, 30)),
                        exposed_area=40.0)
        res = pick(scene, det, SuctionModel(), height_tol=5.0)
        assert res.outcome is PickOutcome.HEIGHT_MISMATCH
        # guarded descent ran all the way down to the floor
        assert res.stop_z < 1.0

    def test_stop_height_within_tolerance_on_real_part(self):
        scene, part = _isolated_scene()
        det = _detection_for(scene)
        res = pick(scene, det, SuctionModel(), height_tol=5.0)
        assert res.outcome is PickOutcome.HELD
        assert abs(res.stop_z - det.centroid[2]) <= 5.0

    def test_injected_drop_during_lift(self):
        scene, part = _isolated_scene()
        det = _detection_for(scene)
        res = pick(scene, det, SuctionModel(), drop_prob=1.0,
                   rng=np.random.default_rng(3))
        assert res.outcome is PickOutcome.DROP_DURING_LIFT
        assert part.status is PartStatus.IN_BIN

    def test_deterministic_given_seed(self):
        outcomes = []
        for _ in range(2):
            scene, _ = _isolated_scene()
            det = _detection_for(scene)
            res = pick(scene, det, SuctionModel(), drop_prob=0.5,
                       rng=np.random.default_rng(11))
            outcomes.append(res.outcome)
        assert outcomes[0] == outcomes[1]


class TestClean:
    def _held_part(self, depth_bottom=1.0):
        part = make_part(0, make_rect_footprint(100, 60), Pose(0, 0),
                         depth_bottom=depth_bottom,
                         status=PartStatus.HELD)
        return part

    def _stationary_traj(self, duration, f_set=5.0):
        from decake.primitives import BrushTrajectory, Pattern

        return BrushTrajectory(Pattern.SPIRAL,
                               ((0.0, 0.0, 0.0), (duration, 0.0, 0.0)),
                               f_set, duration)

    def test_three_pass_geometric_decay(self):
        # cell swept 3 passes at fz = F_ref with rho_max 0.3: (1-0.3)^3 = 0.343
        part = self._held_part(depth_bottom=1.0)
        removal = RemovalModel(rho_max=0.3, f_ref=5.0, brush_radius=10.0,
                               pass_dwell=0.1)
        contact = flat_surface(200.0)
        traj = self._stationary_traj(0.3)
        res = clean(part, traj, removal, contact, brush_point=(0.0, 0.0),
                    start_z=200.0 - 0.5)
        assert res.outcome is CleanOutcome.CLEANED
        grid = part.powder_bottom
        iy, ix = grid.shape[0] // 2, grid.shape[1] // 2
        assert grid.cells[iy, ix] == pytest.approx((1 - 0.3) ** 3, rel=1e-6)

    def test_no_contact_no_removal(self):
        part = self._held_part(depth_bottom=1.0)
        before = grid_integrate(part.powder_bottom)
        removal = RemovalModel(rho_max=0.3)
        contact = flat_surface(200.0)
        # start far above the surface, for less than the contact-lost dwell:
        # the admittance seek never reaches the brushes, so fz stays 0
        traj = self._stationary_traj(0.15)
        res = clean(part, traj, removal, contact, start_z=250.0)
        assert res.dust_removed == 0.0
        assert grid_integrate(part.powder_bottom) == before

    def test_mass_conservation_exact(self, cfg):
        part = self._held_part(depth_bottom=0.8)
        density = cfg.scene.powder_density
        before = part_total_mass(part, density)
        removal = RemovalModel(rho_max=0.2, brush_radius=30.0)
        res = clean(part, self._stationary_traj(1.0), removal,
                    flat_surface(200.0), powder_density=density,
                    start_z=199.5)
        after = part_total_mass(part, density)
        assert before - after == pytest.approx(res.dust_removed, abs=1e-12)
        assert res.dust_removed > 0.0

    def test_longer_duration_never_removes_less(self, cfg):
        removed = []
        for duration in (0.2, 0.5, 1.0, 2.0):
            part = self._held_part(depth_bottom=1.0)
            removal = RemovalModel(rho_max=0.15, brush_radius=20.0)
            res = clean(part, self._stationary_traj(duration), removal,
                        flat_surface(200.0), start_z=199.5)
            removed.append(res.dust_removed)
        assert all(b >= a - 1e-12 for a, b in zip(removed, removed[1:]))

    def test_drop_when_drag_exceeds_hold(self):
        part = self._held_part(depth_bottom=1.0)
        removal = RemovalModel(rho_max=0.3)
        res = clean(part, self._stationary_traj(0.5), removal,
                    flat_surface(200.0), hold_force=0.1, brush_drag_mu=0.8,
                    start_z=199.5)
        assert res.outcome is CleanOutcome.DROPPED

    def test_requires_held_part(self):
        part = make_part(0, make_rect_footprint(100, 60))
        with pytest.raises(ValueError):
            clean(part, self._stationary_traj(0.1), RemovalModel(),
                  flat_surface(200.0))


class TestFlip:
    def test_double_flip_is_identity(self):
        part = make_part(0, make_rect_footprint(100, 60), Pose(1, 2, 0, 0.4),
                         depth_top=0.9, depth_bottom=0.2,
                         status=PartStatus.HELD)
        scene = make_scene([part])
        top0 = np.array(part.powder_top.cells)
        bottom0 = np.array(part.powder_bottom.cells)
        flip(scene, part, rng=np.random.default_rng(0))
        assert part.face_up is False
        assert np.array_equal(part.powder_top.cells, bottom0)
        part.status = PartStatus.HELD
        flip(scene, part, rng=np.random.default_rng(1))
        assert part.face_up is True
        assert np.array_equal(part.powder_top.cells, top0)
        assert np.array_equal(part.powder_bottom.cells, bottom0)

    def test_lands_in_flip_area(self, cfg):
        part = make_part(0, make_rect_footprint(100, 60),
                         status=PartStatus.HELD)
        scene = make_scene([part], cfg)
        flip(scene, part, rng=np.random.default_rng(0))
        assert part.status is PartStatus.ON_FLIP_AREA
        assert point_in_polygon((part.pose.x, part.pose.y), scene.flip_area)

    def test_insole_is_flippable(self):
        part = make_part(0, make_rect_footprint(250, 80), thickness=10.0,
                         status=PartStatus.HELD)
        assert part.spec.flatness_ratio == pytest.approx(0.125)
        scene = make_scene([part])
        flip(scene, part, flat_threshold=0.3)   # should not raise

    def test_cube_like_part_not_flippable(self):
        part = make_part(0, make_rect_footprint(50, 50), thickness=50.0,
                         status=PartStatus.HELD)
        scene = make_scene([part])
        with pytest.raises(NotFlippable):
            flip(scene, part, flat_threshold=0.3)

    def test_spill_fraction_accounted(self, cfg):
        part = make_part(0, make_rect_footprint(100, 60), depth_top=1.0,
                         depth_bottom=1.0, status=PartStatus.HELD)
        scene = make_scene([part])
        total0 = scene_total_mass(scene)
        flip(scene, part, spill_fraction=0.25, rng=np.random.default_rng(0))
        assert scene.flip_area_spill > 0.0
        assert scene_total_mass(scene) == pytest.approx(total0, rel=1e-12)

    def test_yaw_mirrored(self):
        part = make_part(0, make_rect_footprint(100, 60), Pose(0, 0, 0, 0.7),
                         status=PartStatus.HELD)
        scene = make_scene([part])
        flip(scene, part, rng=np.random.default_rng(0))
        assert part.pose.yaw == pytest.approx(math.pi - 0.7)


class TestPlace:
    def test_single_part_centroid_inside(self):
        part = make_part(0, make_rect_footprint(100, 60),
                         status=PartStatus.HELD)
        scene = make_scene([part])
        place(scene, part, scene.destination, rng=np.random.default_rng(0))
        assert part.status is PartStatus.DONE
        assert point_in_polygon((part.pose.x, part.pose.y), scene.destination)

    def test_ten_parts_sequential(self):
        parts = [make_part(i, make_rect_footprint(100, 60),
                           status=PartStatus.HELD) for i in range(10)]
        scene = make_scene(parts)
        rng = np.random.default_rng(5)
        for p in parts:
            place(scene, p, scene.destination, rng=rng)
        assert len({p.id for p in parts}) == 10
        for p in parts:
            assert p.status is PartStatus.DONE
            assert point_in_polygon((p.pose.x, p.pose.y), scene.destination)

    def test_place_requires_held(self):
        part = make_part(0, make_rect_footprint(100, 60))
        scene = make_scene([part])
        with pytest.raises(ValueError):
            place(scene, part, scene.destination)
