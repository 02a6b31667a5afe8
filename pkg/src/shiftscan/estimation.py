"""Demultiplexing, zeroing, calibration fitting, and evaluation metrics.

Angle estimation uses the datasheet reference slope a_ref = vdd/360 V/deg;
all analysis operates on incremental values (voltage and angle deltas
relative to a zero reference).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .readout import SampleFrame, ScanPlan
from .world import reference_slope


class EstimationError(Exception):
    pass


class LayoutMismatch(EstimationError):
    pass


class DegenerateInput(EstimationError):
    pass


class OutOfRange(EstimationError):
    pass


@dataclass(frozen=True)
class ChannelLayout:
    """Slot-to-channel mapping of a scan plan; guard slots map to None."""

    slots: tuple[Optional[str], ...]
    kinds: dict[str, str]  # channel label -> "joint" | "hall"

    def __post_init__(self):
        labels = [s for s in self.slots if s is not None]
        if len(set(labels)) != len(labels):
            raise LayoutMismatch("slot channels must be unique")
        missing = set(labels) - set(self.kinds)
        if missing:
            raise LayoutMismatch(f"channels without a kind: {sorted(missing)}")

    @classmethod
    def from_plan(cls, plan: ScanPlan, kinds: dict[str, str]) -> "ChannelLayout":
        return cls(slots=tuple(s.channel for s in plan.slots), kinds=dict(kinds))

    def slot_index(self, channel: str) -> int:
        return self.slots.index(channel)


def counts_to_volts(counts, vdd: float, adc_bits: int):
    """Inverse of the ADC quantizer: count * vdd / (2^bits - 1)."""
    return np.asarray(counts, dtype=float) * vdd / ((1 << adc_bits) - 1)


def demux(frame: SampleFrame, layout: ChannelLayout, vdd: float, adc_bits: int) -> dict[str, float]:
    """Route one frame's counts to channel labels, converted to volts."""
    if len(frame.samples) != len(layout.slots):
        raise LayoutMismatch(
            f"frame has {len(frame.samples)} slots, layout expects {len(layout.slots)}"
        )
    volts = counts_to_volts(frame.samples, vdd, adc_bits)
    return {ch: float(volts[i]) for i, ch in enumerate(layout.slots) if ch is not None}


def demux_counts(
    counts: np.ndarray, layout: ChannelLayout, vdd: float, adc_bits: int
) -> dict[str, np.ndarray]:
    """Vectorized demux of a counts matrix (n_frames, n_slots)."""
    if counts.shape[1] != len(layout.slots):
        raise LayoutMismatch("counts width does not match layout")
    volts = counts_to_volts(counts, vdd, adc_bits)
    return {ch: volts[:, i] for i, ch in enumerate(layout.slots) if ch is not None}


@dataclass(frozen=True)
class ChannelSeries:
    channel: str
    times: np.ndarray  # seconds, strictly increasing
    values: np.ndarray
    zero_reference: Optional[float] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if len(times) != len(values):
            raise EstimationError("times and values must have equal length")
        if np.any(np.diff(times) <= 0):
            raise EstimationError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


def to_delta(series: ChannelSeries) -> ChannelSeries:
    """Subtract the zero reference (first sample unless already captured)."""
    zero = series.zero_reference
    if zero is None:
        zero = float(series.values[0])
    return replace(series, values=series.values - zero, zero_reference=zero)


def angle_from_voltage(delta_v, vdd: float):
    """Incremental angle estimate through the reference slope, degrees."""
    return np.asarray(delta_v, dtype=float) / reference_slope(vdd)


def fit_slope_through_origin(x, y) -> float:
    """Least-squares slope constrained through the origin: sum(xy)/sum(x^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise EstimationError("x and y must have equal length >= 2")
    sxx = float(np.dot(x, x))
    if sxx == 0.0:
        raise DegenerateInput("all x values are zero")
    return float(np.dot(x, y)) / sxx


def ape_slope(a_fit: float, a_ref: float) -> float:
    """Absolute percentage error of the fitted slope."""
    if a_ref == 0:
        raise DegenerateInput("a_ref must be nonzero")
    return abs(a_fit - a_ref) / a_ref * 100.0


def relative_scale_error(a: float, a_ref: float) -> float:
    """Relative scale-factor error of angle estimates made with a_ref."""
    if a_ref == 0:
        raise DegenerateInput("a_ref must be nonzero")
    return (a - a_ref) / a_ref


def estimation_errors(
    delta_v, delta_theta_true, vdd: float
) -> tuple[np.ndarray, float, float]:
    """Per-sample angle errors plus their RMSE and population std, degrees."""
    dv = np.asarray(delta_v, dtype=float)
    dth = np.asarray(delta_theta_true, dtype=float)
    if len(dv) != len(dth) or len(dv) < 2:
        raise EstimationError("series must have equal length >= 2")
    e = dv / reference_slope(vdd) - dth
    rmse = float(np.sqrt(np.mean(e * e)))
    std = float(np.std(e))
    return e, rmse, std


def align(source: ChannelSeries, target_times) -> ChannelSeries:
    """Linearly interpolate the source series at the target times."""
    target = np.asarray(target_times, dtype=float)
    if len(source.times) < 2:
        raise EstimationError("source needs at least 2 samples")
    if target.size and (target.min() < source.times[0] or target.max() > source.times[-1]):
        raise OutOfRange(
            f"target times outside source span [{source.times[0]}, {source.times[-1]}]"
        )
    values = np.interp(target, source.times, source.values)
    return ChannelSeries(
        channel=source.channel,
        times=target,
        values=values,
        zero_reference=source.zero_reference,
    )


@dataclass
class MetricsReport:
    """Per-trial characterization metrics with cross-trial aggregation."""

    ape_slope_pct: np.ndarray
    rmse_ref_deg: np.ndarray
    std_error_deg: np.ndarray

    def __post_init__(self):
        self.ape_slope_pct = np.atleast_1d(np.asarray(self.ape_slope_pct, dtype=float))
        self.rmse_ref_deg = np.atleast_1d(np.asarray(self.rmse_ref_deg, dtype=float))
        self.std_error_deg = np.atleast_1d(np.asarray(self.std_error_deg, dtype=float))
        if not (len(self.ape_slope_pct) == len(self.rmse_ref_deg) == len(self.std_error_deg)):
            raise EstimationError("per-trial metric arrays must have equal length")

    @property
    def n_trials(self) -> int:
        return len(self.ape_slope_pct)

    def _agg(self, values: np.ndarray) -> tuple[float, Optional[float]]:
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else None
        return mean, std

    @property
    def summary(self) -> dict[str, tuple[float, Optional[float]]]:
        return {
            "ape_slope_pct": self._agg(self.ape_slope_pct),
            "rmse_ref_deg": self._agg(self.rmse_ref_deg),
            "std_error_deg": self._agg(self.std_error_deg),
        }

    @staticmethod
    def format_cell(mean: float, std: Optional[float]) -> str:
        if std is None:
            return f"{mean:.3f} (n/a)"
        return f"{mean:.3f} ({std:.4f})"

    def to_text(self) -> str:
        """Flat key-value report mirroring the characterization table columns."""
        lines = [f"trials = {self.n_trials}"]
        for key, (mean, std) in self.summary.items():
            lines.append(f"{key}_mean = {mean:.9g}")
            lines.append(f"{key}_std = {'n/a' if std is None else format(std, '.9g')}")
            lines.append(f"{key} = {self.format_cell(mean, std)}")
        return "\n".join(lines) + "\n"
