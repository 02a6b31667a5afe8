"""Synthetic sensor physics and experiment trajectory generators.

Two sensor types are modeled: a magnetic rotary joint sensor with a linear
angle-to-voltage characteristic (slope vdd/360 V/deg), and a four-channel
Hall-effect tactile module that reads the axial field deviation of a
point-dipole magnet pushed toward the sensor plane by contact force.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class WorldError(Exception):
    pass


def reference_slope(vdd: float) -> float:
    """Datasheet angle-to-voltage sensitivity, V/deg."""
    return vdd / 360.0


@dataclass(frozen=True)
class JointSensorParams:
    vdd: float = 3.3
    offset_angle: float = 0.0  # magnet mounting orientation, deg
    noise_sigma: float = 0.0021  # volts; ~0.23 deg through the reference slope
    seed: int = 0

    def __post_init__(self):
        if self.vdd <= 0:
            raise WorldError("vdd must be positive")
        if self.noise_sigma < 0:
            raise WorldError("noise_sigma must be >= 0")


def joint_sensor_voltage(angle, params: JointSensorParams, noise_draw=0.0):
    """Voltage of the rotary sensor at a joint angle (deg).

    The effective angle wraps to [0, 360) and maps linearly onto [0, vdd];
    noise_draw is a standard-normal sample scaled by noise_sigma.
    """
    wrapped = np.mod(np.asarray(angle, dtype=float) + params.offset_angle, 360.0)
    v = wrapped * reference_slope(params.vdd) + params.noise_sigma * np.asarray(noise_draw)
    return np.clip(v, 0.0, params.vdd)


@dataclass(frozen=True)
class TactileParams:
    """Geometry and transfer parameters of the four-channel tactile module.

    The four Hall sensors sit in the z=0 plane, evenly spaced on a circle
    of radius sensor_radius_mm.  An axially magnetized magnet rests at
    height magnet_rest_height_mm above the center and is displaced axially
    by force/axial_stiffness and laterally by lateral_compliance*force
    toward the contact point.
    """

    sensor_radius_mm: float = 2.0
    magnet_rest_height_mm: float = 6.0
    magnet_moment: float = 1.0  # scaled dipole strength (field units * mm^3)
    axial_stiffness: float = 2.0  # N/mm
    lateral_compliance: float = 0.25  # mm/N
    quiescent_voltage: float = 0.6
    sensitivity: float = 50.0  # volts per field unit
    vdd: float = 3.3
    noise_sigma: float = 0.002
    seed: int = 0

    def __post_init__(self):
        if self.axial_stiffness <= 0 or self.lateral_compliance < 0:
            raise WorldError("stiffness parameters must be positive")
        if not 0.0 <= self.quiescent_voltage <= self.vdd:
            raise WorldError("quiescent_voltage must be within [0, vdd]")
        if self.magnet_rest_height_mm <= 0:
            raise WorldError("magnet_rest_height_mm must be positive")

    @property
    def sensor_positions(self) -> np.ndarray:
        """(4, 2) sensor coordinates, mm, at 0/90/180/270 degrees."""
        ang = np.deg2rad([0.0, 90.0, 180.0, 270.0])
        return self.sensor_radius_mm * np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass(frozen=True)
class ContactEvent:
    location_class: int  # 0 = no contact, 1-4 = contact locations
    force: float  # newtons
    contact_point: Optional[tuple[float, float]] = None  # mm

    def __post_init__(self):
        if self.location_class not in (0, 1, 2, 3, 4):
            raise WorldError(f"invalid location class {self.location_class}")
        if self.force < 0:
            raise WorldError("force must be >= 0")
        if self.location_class == 0 and self.force != 0:
            raise WorldError("no-contact events must have zero force")
        if self.location_class != 0 and self.contact_point is None:
            raise WorldError("contact events need a contact point")


NO_CONTACT = ContactEvent(location_class=0, force=0.0)


def contact_point_for_location(location: int, params: TactileParams) -> tuple[float, float]:
    """Nominal contact point of labeled location 1-4 (above sensor k-1)."""
    if location not in (1, 2, 3, 4):
        raise WorldError(f"invalid contact location {location}")
    p = params.sensor_positions[location - 1]
    return (float(p[0]), float(p[1]))


def _dipole_bz(dx, dy, dz, moment: float):
    """Axial field of a z-oriented point dipole at displacement (dx, dy, dz).

    Constant factors are absorbed into the scaled moment.
    """
    r2 = dx * dx + dy * dy + dz * dz
    return moment * (3.0 * dz * dz - r2) / r2**2.5


def magnet_position(forces, contact_points, params: TactileParams):
    """Magnet center (x, y, z) under contact, vectorized over samples.

    contact_points holds the per-sample contact target (ignored where the
    force is zero); lateral displacement is along the unit vector from the
    fingertip center to the contact point.
    """
    f = np.asarray(forces, dtype=float)
    pts = np.asarray(contact_points, dtype=float).reshape(-1, 2)
    z = params.magnet_rest_height_mm - f / params.axial_stiffness
    norm = np.linalg.norm(pts, axis=-1)
    unit = np.zeros_like(pts)
    nz = norm > 0
    unit[nz] = pts[nz] / norm[nz, None]
    lateral = params.lateral_compliance * f[..., None] * unit
    return lateral[..., 0], lateral[..., 1], z


def tactile_field_deviations(forces, contact_points, params: TactileParams) -> np.ndarray:
    """Per-sensor axial field deviation from the rest (zero-force) field.

    Returns shape (n, 4).
    """
    mx, my, mz = magnet_position(forces, contact_points, params)
    sensors = params.sensor_positions
    rest = _dipole_bz(
        sensors[:, 0], sensors[:, 1], -params.magnet_rest_height_mm, params.magnet_moment
    )
    dx = sensors[None, :, 0] - np.asarray(mx).reshape(-1, 1)
    dy = sensors[None, :, 1] - np.asarray(my).reshape(-1, 1)
    dz = -np.asarray(mz).reshape(-1, 1)
    return _dipole_bz(dx, dy, dz, params.magnet_moment) - rest[None, :]


def tactile_hall_voltages(
    event: ContactEvent, params: TactileParams, noise_draws=(0.0, 0.0, 0.0, 0.0)
) -> np.ndarray:
    """Four Hall channel voltages for one contact event."""
    point = event.contact_point if event.contact_point is not None else (0.0, 0.0)
    bz = tactile_field_deviations([event.force], [point], params)[0]
    v = params.quiescent_voltage + params.sensitivity * bz
    v = v + params.noise_sigma * np.asarray(noise_draws, dtype=float)
    return np.clip(v, 0.0, params.vdd)


@dataclass
class Trajectory:
    """Time-stamped ground truth for one experiment run."""

    times: np.ndarray  # seconds, strictly increasing
    joint_angles: dict[str, np.ndarray] = field(default_factory=dict)
    contact_classes: Optional[np.ndarray] = None  # int, 0-4
    contact_forces: Optional[np.ndarray] = None  # newtons
    contact_points: Optional[np.ndarray] = None  # (n, 2) mm

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise WorldError("sample times must be strictly increasing")
        n = len(self.times)
        for lab, a in self.joint_angles.items():
            if len(a) != n:
                raise WorldError(f"angle series {lab} length mismatch")
        for a in (self.contact_classes, self.contact_forces, self.contact_points):
            if a is not None and len(a) != n:
                raise WorldError("contact series length mismatch")

    @property
    def duration(self) -> float:
        return float(self.times[-1])


def sine_angle(t, amplitude: float = 70.0, period: float = 20.0):
    """Analytic characterization motion, degrees."""
    return amplitude * np.sin(2.0 * np.pi * np.asarray(t, dtype=float) / period)


def joint_characterization_trajectory(
    cycles: int = 5,
    period: float = 20.0,
    amplitude: float = 70.0,
    rate: float = 1000.0,
    channel: str = "joint",
) -> Trajectory:
    """Sinusoidal joint motion, `cycles` periods sampled at `rate`."""
    if cycles <= 0 or period <= 0 or amplitude <= 0 or rate <= 0:
        raise WorldError("all trajectory arguments must be positive")
    n = int(round(cycles * period * rate))
    t = np.arange(n + 1) / rate
    return Trajectory(times=t, joint_angles={channel: sine_angle(t, amplitude, period)})


def indentation_trajectory(
    order: Sequence[int] = (1, 2, 3, 4),
    peak_force: float = 4.0,
    feed_rate: float = 0.3,
    params: TactileParams = TactileParams(),
    rate: float = 1000.0,
    dwell: float = 2.0,
) -> Trajectory:
    """Loading-unloading presses at each location in `order`.

    The indenter moves at a constant feed rate, so force ramps at
    feed_rate * axial_stiffness N/s up to peak_force and back down; a
    no-contact dwell precedes and separates the presses.
    """
    if peak_force <= 0:
        raise WorldError("peak_force must be positive")
    if feed_rate <= 0:
        raise WorldError("feed_rate must be positive")
    if sorted(order) != sorted(set(order)) or not set(order) <= {1, 2, 3, 4}:
        raise WorldError("order must be distinct locations from 1-4")
    ramp_rate = feed_rate * params.axial_stiffness  # N/s
    ramp = peak_force / ramp_rate

    # (duration, location) segments; location 0 means no contact
    segments: list[tuple[float, int]] = [(dwell, 0)]
    for loc in order:
        segments.append((2.0 * ramp, loc))
        segments.append((dwell, 0))

    total = sum(d for d, _ in segments)
    n = int(round(total * rate))
    t = np.arange(n + 1) / rate
    forces = np.zeros_like(t)
    classes = np.zeros(len(t), dtype=np.int64)
    points = np.zeros((len(t), 2))
    t0 = 0.0
    for duration, loc in segments:
        if loc != 0:
            sel = (t > t0) & (t < t0 + duration)
            local = t[sel] - t0
            forces[sel] = peak_force - ramp_rate * np.abs(local - ramp)
            classes[sel] = loc
            points[sel] = contact_point_for_location(loc, params)
        t0 += duration
    return Trajectory(
        times=t, contact_classes=classes, contact_forces=forces, contact_points=points
    )


def make_joint_channel(angle_of_t, params: JointSensorParams, rng: np.random.Generator):
    """Channel voltage function for the readout: f(times) -> volts.

    angle_of_t may be a callable of time or a constant angle in degrees.
    Noise is drawn from rng on each call, one sample per requested time.
    """

    def channel(times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        angle = angle_of_t(times) if callable(angle_of_t) else np.full_like(times, angle_of_t)
        noise = rng.standard_normal(times.shape) if params.noise_sigma > 0 else 0.0
        return joint_sensor_voltage(angle, params, noise)

    return channel


def make_hall_channels(
    trajectory: Trajectory, params: TactileParams, rng: np.random.Generator
) -> dict[int, "_HallChannel"]:
    """Voltage functions for the four Hall channels of one tactile run.

    Force and contact point are interpolated from the trajectory (piecewise
    linear force, zero-order-hold contact point), so the readout can sample
    at its own slot times.
    """
    return {k: _HallChannel(trajectory, params, k, rng) for k in range(4)}


class _HallChannel:
    def __init__(self, traj: Trajectory, params: TactileParams, index: int, rng):
        self._traj = traj
        self._params = params
        self._index = index
        self._rng = rng

    def __call__(self, times: np.ndarray) -> np.ndarray:
        traj, p = self._traj, self._params
        forces = np.interp(times, traj.times, traj.contact_forces)
        idx = np.clip(np.searchsorted(traj.times, times, side="right") - 1, 0, None)
        points = traj.contact_points[idx]
        bz = tactile_field_deviations(forces, points, p)[:, self._index]
        v = p.quiescent_voltage + p.sensitivity * bz
        if p.noise_sigma > 0:
            v = v + p.noise_sigma * self._rng.standard_normal(len(v))
        return np.clip(v, 0.0, p.vdd)
