import math

import numpy as np
import pytest

from decake.control import (
    ContactModel,
    EndEffectorState,
    FTReading,
    compliant_descend,
    flat_surface,
    hybrid_track,
    monitor_lift,
    settle_step_count,
    trace_to_csv,
)
from decake.errors import ContactFault, ContactLost
from decake.geometry import Pose


class TestCompliantDescend:
    def test_quasi_static_stop_matches_closed_form(self):
        # surface at 100, k = 10 N/mm, f_stop = 5 N: delta = f/k = 0.5 mm
        contact = flat_surface(100.0)
        res = compliant_descend(Pose(0, 0, 120), target_z=50.0, f_stop=5.0,
                                contact=contact, speed=1.0, dt=0.004)
        assert res.contacted
        assert res.stop_z == pytest.approx(99.5, abs=1.0 * 0.004 + 1e-9)

    def test_no_surface_reaches_target(self):
        contact = flat_surface(-1000.0)
        res = compliant_descend(Pose(0, 0, 100), target_z=20.0, f_stop=5.0,
                                contact=contact)
        assert not res.contacted
        assert res.stop_z == 20.0

    def test_zero_threshold_stops_at_first_contact(self):
        contact = flat_surface(50.0)
        speed, dt = 20.0, 0.004
        res = compliant_descend(Pose(0, 0, 60), target_z=0.0, f_stop=0.0,
                                contact=contact, speed=speed, dt=dt)
        assert res.contacted
        assert abs(res.stop_z - 50.0) <= speed * dt + 1e-12

    def test_undefined_surface_raises(self):
        contact = ContactModel(surface=lambda x, y: None, stiffness=10.0)
        with pytest.raises(ContactFault):
            compliant_descend(Pose(0, 0, 100), 0.0, 5.0, contact)

    @pytest.mark.parametrize("k", [5.0, 10.0, 50.0])
    @pytest.mark.parametrize("speed", [5.0, 20.0, 50.0])
    @pytest.mark.parametrize("dt", [0.002, 0.004, 0.01])
    @pytest.mark.parametrize("c", [0.0, 0.2])
    def test_overshoot_bound_property_sweep(self, k, speed, dt, c):
        contact = ContactModel(surface=lambda x, y: 80.0, stiffness=k, damping=c)
        res = compliant_descend(Pose(0, 0, 90), target_z=0.0, f_stop=5.0,
                                contact=contact, speed=speed, dt=dt)
        assert res.contacted
        overshoot = res.trace[-1].fz - 5.0
        assert overshoot <= k * speed * dt + c * speed + 1e-9

    def test_trace_is_deterministic(self):
        contact = flat_surface(30.0)
        a = compliant_descend(Pose(0, 0, 50), 0.0, 5.0, contact)
        b = compliant_descend(Pose(0, 0, 50), 0.0, 5.0, contact)
        assert a == b


class TestHybridTrack:
    def test_geometric_error_decay_halving(self):
        # g*dt = 0.5, initial error 4 N: 4, 2, 1, 0.5, ...
        contact = flat_surface(0.0)
        start_z = -(5.0 - 4.0) / 10.0  # f0 = 1 N
        res = hybrid_track([(0.0, 0.0, 0.0), (0.1, 0.0, 0.0)], f_set=5.0,
                           band=0.5, contact=contact, gain_dt=0.5, dt=0.004,
                           start_z=start_z)
        errors = [5.0 - r.fz for _, _, r in res.trace[:5]]
        assert errors == pytest.approx([4.0, 2.0, 1.0, 0.5, 0.25])

    def test_flat_surface_full_in_band_after_settle(self):
        contact = flat_surface(0.0)
        res = hybrid_track([(0.0, 0.0, 0.0), (2.0, 100.0, 0.0)], f_set=5.0,
                           band=1.0, contact=contact, gain_dt=0.3, dt=0.004,
                           start_z=-0.01)
        assert res.in_band_fraction == 1.0

    @pytest.mark.parametrize("gain_dt", [0.1, 0.3, 0.5, 0.7, 0.9, 0.99])
    def test_in_band_for_any_stable_gain(self, gain_dt):
        contact = flat_surface(0.0)
        res = hybrid_track([(0.0, 0.0, 0.0), (1.0, 50.0, 0.0)], f_set=5.0,
                           band=1.0, contact=contact, gain_dt=gain_dt,
                           dt=0.004, start_z=-0.05)
        assert res.in_band_fraction == 1.0

    def test_surface_step_transient_and_reentry_bound(self):
        # 1 mm step mid-path: transient <= k * 1 mm, back in band within the
        # geometric-recursion bound
        k, gain_dt, band = 10.0, 0.3, 1.0
        step_x = 50.0
        contact = ContactModel(
            surface=lambda x, y: 1.0 if x >= step_x else 0.0, stiffness=k)
        res = hybrid_track([(0.0, 0.0, 0.0), (2.0, 100.0, 0.0)], f_set=5.0,
                           band=band, contact=contact, gain_dt=gain_dt,
                           dt=0.004, start_z=-0.5)
        trace = res.trace
        step_idx = next(i for i, (_, p, _) in enumerate(trace) if p.x >= step_x)
        transient = max(abs(r.fz - 5.0) for _, _, r in trace[step_idx:])
        assert transient <= k * 1.0 + 1e-9
        reentry = math.ceil(math.log(band / (k * 1.0)) / math.log(abs(1 - gain_dt)))
        for _, _, r in trace[step_idx + reentry + 1:]:
            assert abs(r.fz - 5.0) <= band + 1e-9

    def test_contact_lost_raises(self):
        contact = flat_surface(0.0)
        with pytest.raises(ContactLost):
            hybrid_track([(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)], f_set=5.0,
                         band=1.0, contact=contact, gain_dt=0.3, dt=0.004,
                         start_z=100.0, contact_lost_dwell=0.05)

    def test_force_never_negative_above_surface(self):
        contact = flat_surface(0.0)
        res = hybrid_track([(0.0, 0.0, 0.0), (0.5, 0.0, 0.0)], f_set=5.0,
                           band=1.0, contact=contact, gain_dt=0.3, dt=0.004,
                           start_z=-0.01)
        assert all(r.fz >= 0.0 for _, _, r in res.trace)

    def test_settle_step_count(self):
        assert settle_step_count(4.0, 0.5, 0.5) == 3
        assert settle_step_count(0.1, 1.0, 0.3) == 0


class TestMonitorLift:
    def test_quiet_lift_with_payload(self):
        trace = [FTReading(fz=0.5) for _ in range(20)]
        assert monitor_lift(trace, drag_limit=20.0, payload_fz=0.5)

    def test_lateral_spike_fails(self):
        trace = [FTReading(fz=0.5), FTReading(fx=30.0, fz=0.5)]
        assert not monitor_lift(trace, drag_limit=20.0, payload_fz=0.5)

    def test_exactly_at_limit_is_retained(self):
        trace = [FTReading(fx=20.0)]
        assert monitor_lift(trace, drag_limit=20.0)


class TestPlumbing:
    def test_end_effector_validation(self):
        with pytest.raises(ValueError):
            EndEffectorState(speed_limit=0.0)

    def test_trace_csv(self, tmp_path):
        contact = flat_surface(0.0)
        res = hybrid_track([(0.0, 0.0, 0.0), (0.1, 10.0, 0.0)], f_set=5.0,
                           band=1.0, contact=contact, start_z=-0.5)
        out = tmp_path / "trace.csv"
        trace_to_csv(res.trace, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "t,x,y,z,fx,fy,fz"
        assert len(lines) == len(res.trace) + 1
