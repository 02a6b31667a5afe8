"""Unit tests for the synthetic sensor physics and trajectories."""

import numpy as np
import pytest

from shiftscan.world import (
    ContactEvent,
    JointSensorParams,
    TactileParams,
    WorldError,
    contact_point_for_location,
    indentation_trajectory,
    joint_characterization_trajectory,
    joint_sensor_voltage,
    make_hall_channels,
    make_joint_channel,
    reference_slope,
    sine_angle,
    tactile_field_deviations,
    tactile_hall_voltages,
)

NOISELESS = JointSensorParams(noise_sigma=0.0)


class TestJointSensor:
    def test_reference_slope_value(self):
        assert reference_slope(3.3) == pytest.approx(0.009167, abs=5e-7)

    def test_ninety_degrees(self):
        assert joint_sensor_voltage(90.0, NOISELESS) == pytest.approx(0.825)

    def test_zero_degrees(self):
        assert joint_sensor_voltage(0.0, NOISELESS) == 0.0

    def test_one_degree(self):
        assert joint_sensor_voltage(1.0, NOISELESS) == pytest.approx(0.009167, abs=5e-7)

    def test_offset_wraps(self):
        params = JointSensorParams(noise_sigma=0.0, offset_angle=350.0)
        assert joint_sensor_voltage(20.0, params) == pytest.approx(
            10.0 * reference_slope(3.3)
        )

    def test_linearity_away_from_wrap(self):
        params = JointSensorParams(noise_sigma=0.0, offset_angle=180.0)
        angles = np.linspace(-70.0, 70.0, 101)
        v = joint_sensor_voltage(angles, params)
        slopes = np.diff(v) / np.diff(angles)
        assert np.allclose(slopes, reference_slope(3.3), rtol=1e-12)

    def test_noise_is_scaled_and_clamped(self):
        params = JointSensorParams(noise_sigma=0.1)
        v = joint_sensor_voltage(0.0, params, noise_draw=-3.0)
        assert v == 0.0  # clamped at the rail
        v = joint_sensor_voltage(90.0, params, noise_draw=1.0)
        assert v == pytest.approx(0.825 + 0.1)

    def test_invalid_params(self):
        with pytest.raises(WorldError):
            JointSensorParams(vdd=0.0)
        with pytest.raises(WorldError):
            JointSensorParams(noise_sigma=-1.0)


class TestTactileModule:
    def test_sensor_positions(self):
        p = TactileParams()
        pos = p.sensor_positions
        assert pos.shape == (4, 2)
        radii = np.linalg.norm(pos, axis=1)
        assert np.allclose(radii, p.sensor_radius_mm)
        # 90 degrees apart
        angles = np.degrees(np.arctan2(pos[:, 1], pos[:, 0])) % 360
        assert np.allclose(sorted(angles), [0.0, 90.0, 180.0, 270.0])

    def test_rest_state(self):
        p = TactileParams(noise_sigma=0.0)
        v = tactile_hall_voltages(ContactEvent(0, 0.0), p)
        assert np.allclose(v, p.quiescent_voltage)

    def test_centered_contact_symmetry(self):
        p = TactileParams(noise_sigma=0.0)
        event = ContactEvent(1, 2.5, contact_point=(0.0, 0.0))
        v = tactile_hall_voltages(event, p)
        assert np.allclose(v, v[0])
        assert not np.allclose(v, p.quiescent_voltage)

    def test_nearest_channel_dominates(self):
        p = TactileParams(noise_sigma=0.0)
        for loc in (1, 2, 3, 4):
            event = ContactEvent(loc, 4.0, contact_point=contact_point_for_location(loc, p))
            v = tactile_hall_voltages(event, p)
            dev = np.abs(v - p.quiescent_voltage)
            assert np.argmax(dev) == loc - 1

    def test_reflection_symmetry(self):
        # reflecting the contact point across the x axis swaps sensors 1 and 3
        # (indices of the +y and -y sensors) and fixes sensors 0 and 2
        p = TactileParams(noise_sigma=0.0)
        point = (1.2, 0.7)
        mirrored = (1.2, -0.7)
        v = tactile_hall_voltages(ContactEvent(1, 3.0, contact_point=point), p)
        vm = tactile_hall_voltages(ContactEvent(1, 3.0, contact_point=mirrored), p)
        assert np.allclose(v[[0, 2]], vm[[0, 2]], atol=1e-12)
        assert np.allclose(v[[1, 3]], vm[[3, 1]], atol=1e-12)

    def test_field_monotone_in_force(self):
        p = TactileParams(noise_sigma=0.0)
        point = contact_point_for_location(1, p)
        forces = np.linspace(0.0, 4.0, 81)
        bz = tactile_field_deviations(forces, np.tile(point, (81, 1)), p)[:, 0]
        assert np.all(np.diff(bz) > 0)

    def test_zero_force_zero_deviation(self):
        p = TactileParams()
        bz = tactile_field_deviations([0.0], [(1.0, 1.0)], p)
        assert np.allclose(bz, 0.0, atol=1e-15)

    def test_contact_event_validation(self):
        with pytest.raises(WorldError):
            ContactEvent(0, 1.0)  # no-contact with force
        with pytest.raises(WorldError):
            ContactEvent(1, 1.0)  # contact without a point
        with pytest.raises(WorldError):
            ContactEvent(7, 1.0, contact_point=(0, 0))

    def test_voltage_stays_in_rails(self):
        p = TactileParams(noise_sigma=0.0, sensitivity=1e6)
        event = ContactEvent(1, 4.0, contact_point=contact_point_for_location(1, p))
        v = tactile_hall_voltages(event, p)
        assert np.all(v >= 0.0) and np.all(v <= p.vdd)


class TestTrajectories:
    def test_sine_quarter_period(self):
        assert sine_angle(5.0) == pytest.approx(70.0)

    def test_sine_at_zero(self):
        assert sine_angle(0.0) == 0.0

    def test_characterization_duration(self):
        traj = joint_characterization_trajectory(rate=100.0)
        assert traj.duration == pytest.approx(100.0)

    def test_characterization_rejects_bad_args(self):
        with pytest.raises(WorldError):
            joint_characterization_trajectory(cycles=0)

    def test_indentation_label_sequence(self):
        traj = indentation_trajectory(order=(1, 2, 3, 4), rate=100.0)
        compact = [k for k, _ in __import__("itertools").groupby(traj.contact_classes)]
        assert compact == [0, 1, 0, 2, 0, 3, 0, 4, 0]

    def test_indentation_ramp_duration(self):
        p = TactileParams()
        traj = indentation_trajectory(order=(1,), peak_force=4.0, feed_rate=0.3,
                                      params=p, rate=1000.0)
        ramp = 4.0 / (0.3 * p.axial_stiffness)
        assert ramp == pytest.approx(20.0 / 3.0)
        contact = traj.times[traj.contact_forces > 0]
        assert contact.max() - contact.min() == pytest.approx(2 * ramp, abs=0.01)
        assert traj.contact_forces.max() == pytest.approx(4.0, abs=0.01)

    def test_indentation_rejects_zero_peak(self):
        with pytest.raises(WorldError):
            indentation_trajectory(peak_force=0.0)

    def test_indentation_rejects_repeated_locations(self):
        with pytest.raises(WorldError):
            indentation_trajectory(order=(1, 1, 2, 3))

    def test_nonzero_force_always_labeled(self):
        traj = indentation_trajectory(rate=50.0)
        nz = traj.contact_forces > 0
        assert np.all(np.isin(traj.contact_classes[nz], [1, 2, 3, 4]))
        assert np.all(traj.contact_classes[~nz] == 0)


class TestChannelFactories:
    def test_joint_channel_noiseless(self):
        params = JointSensorParams(noise_sigma=0.0)
        ch = make_joint_channel(45.0, params, np.random.default_rng(0))
        t = np.linspace(0, 1, 5)
        assert np.allclose(ch(t), joint_sensor_voltage(45.0, params))

    def test_joint_channel_seeded(self):
        params = JointSensorParams(noise_sigma=0.002)
        t = np.linspace(0, 1, 100)
        a = make_joint_channel(10.0, params, np.random.default_rng(5))(t)
        b = make_joint_channel(10.0, params, np.random.default_rng(5))(t)
        assert np.array_equal(a, b)

    def test_hall_channels_match_event_model(self):
        p = TactileParams(noise_sigma=0.0)
        traj = indentation_trajectory(order=(2,), params=p, rate=200.0)
        channels = make_hall_channels(traj, p, np.random.default_rng(0))
        # evaluate at trajectory sample times where force/point are exact
        i = int(np.argmax(traj.contact_forces))
        t = np.array([traj.times[i]])
        expected = tactile_hall_voltages(
            ContactEvent(2, float(traj.contact_forces[i]),
                         contact_point=tuple(traj.contact_points[i])), p
        )
        got = np.array([channels[k](t)[0] for k in range(4)])
        assert np.allclose(got, expected, atol=1e-9)
