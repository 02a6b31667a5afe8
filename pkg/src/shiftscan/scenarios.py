"""Experiment presets and end-to-end pipeline runs.

Presets mirror the reference hardware: a 20-unit full hand (thumb 4 joint
units; index 3 joint + 4 Hall units; middle/ring/pinky 3 joint units each),
the 3-unit middle-finger chain, and a 4-channel tactile bench.  Pipeline
runs go world -> readout -> wire protocol -> estimation, so every stage is
exercised the way a live capture would.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .estimation import ChannelLayout, ChannelSeries, MetricsReport, align, ape_slope, demux_counts, estimation_errors, fit_slope_through_origin, to_delta
from .lstm.data import Segment, WindowDataset, build_windows, compute_stats
from .protocol import FrameParser, encode_capture, sequence_gap_check
from .readout import Capture, ChainConfig, ReadoutConfig, build_scan_plan, capture_stream
from .world import (
    JointSensorParams,
    TactileParams,
    Trajectory,
    indentation_trajectory,
    joint_sensor_voltage,
    make_hall_channels,
    reference_slope,
    sine_angle,
)


class ScenarioError(Exception):
    pass


class UnknownPreset(ScenarioError):
    pass


class PipelineCorruption(ScenarioError):
    """The decoded stream did not round-trip cleanly through the protocol."""


@dataclass(frozen=True)
class WorldConfig:
    """Sensor parameter sets keyed by channel kind."""

    joint_channels: tuple[str, ...]
    hall_channels: tuple[str, ...]
    joint_params: JointSensorParams = JointSensorParams()
    tactile_params: Optional[TactileParams] = None

    def __post_init__(self):
        if self.hall_channels and len(self.hall_channels) != 4:
            raise ScenarioError("tactile module needs exactly 4 hall channels")
        if self.hall_channels and self.tactile_params is None:
            raise ScenarioError("hall channels require tactile_params")

    @property
    def kinds(self) -> dict[str, str]:
        kinds = {ch: "joint" for ch in self.joint_channels}
        kinds.update({ch: "hall" for ch in self.hall_channels})
        return kinds


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    readout: ReadoutConfig
    world: WorldConfig
    trajectory: dict
    scan_rate: float = 1000.0
    trials: int = 5
    seed: int = 0
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ScenarioError("trials must be >= 1")
        configured = {lab for c in self.readout.chains for lab in c.unit_labels}
        covered = set(self.world.joint_channels) | set(self.world.hall_channels)
        if configured - covered:
            raise ScenarioError(f"channels without world params: {sorted(configured - covered)}")

    @property
    def layout(self) -> ChannelLayout:
        plan = build_scan_plan(self.readout, self.scan_rate)
        return ChannelLayout.from_plan(plan, self.world.kinds)


PRESET_NAMES = ("full_hand", "middle_finger_only", "tactile_bench")

_JOINT_SINE = {"kind": "joint_sine", "cycles": 5, "period": 20.0, "amplitude": 70.0}
_INDENTATION = {"kind": "indentation", "peak_force": 4.0, "feed_rate": 0.3, "dwell": 2.0}

_HALL_CHANNELS = ("h0", "h1", "h2", "h3")


def preset(name: str) -> ScenarioConfig:
    """Named experiment configurations; scan rate 1 kHz, 5 trials."""
    if name == "full_hand":
        chains = (
            ChainConfig(0, ("t0", "t1", "t2", "t3")),
            ChainConfig(1, ("i0", "i1", "i2") + _HALL_CHANNELS),
            ChainConfig(2, ("m0", "m1", "m2")),
            ChainConfig(3, ("r0", "r1", "r2")),
            ChainConfig(4, ("p0", "p1", "p2")),
        )
        joints = tuple(lab for c in chains for lab in c.unit_labels if not lab.startswith("h"))
        return ScenarioConfig(
            name=name,
            readout=ReadoutConfig(chains=chains),
            world=WorldConfig(
                joint_channels=joints,
                hall_channels=_HALL_CHANNELS,
                tactile_params=TactileParams(),
            ),
            trajectory=dict(_JOINT_SINE),
        )
    if name == "middle_finger_only":
        chains = (ChainConfig(2, ("m0", "m1", "m2")),)
        return ScenarioConfig(
            name=name,
            readout=ReadoutConfig(chains=chains),
            world=WorldConfig(joint_channels=("m0", "m1", "m2"), hall_channels=()),
            trajectory=dict(_JOINT_SINE),
        )
    if name == "tactile_bench":
        chains = (ChainConfig(1, _HALL_CHANNELS),)
        return ScenarioConfig(
            name=name,
            readout=ReadoutConfig(chains=chains),
            world=WorldConfig(
                joint_channels=(),
                hall_channels=_HALL_CHANNELS,
                tactile_params=TactileParams(),
            ),
            trajectory=dict(_INDENTATION),
        )
    raise UnknownPreset(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


# -- config serialization ---------------------------------------------------

def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "name": config.name,
        "readout": {
            "chains": [
                {"chain_id": c.chain_id, "unit_labels": list(c.unit_labels)}
                for c in config.readout.chains
            ],
            "vdd": config.readout.vdd,
            "adc_bits": config.readout.adc_bits,
            "adc_slot_budget": config.readout.adc_slot_budget,
            "sample_phase": config.readout.sample_phase,
        },
        "world": {
            "joint_channels": list(config.world.joint_channels),
            "hall_channels": list(config.world.hall_channels),
            "joint_params": asdict(config.world.joint_params),
            "tactile_params": (
                None if config.world.tactile_params is None else asdict(config.world.tactile_params)
            ),
        },
        "trajectory": dict(config.trajectory),
        "scan_rate": config.scan_rate,
        "trials": config.trials,
        "seed": config.seed,
        "outputs": dict(config.outputs),
    }


def config_from_dict(data: dict) -> ScenarioConfig:
    try:
        readout = ReadoutConfig(
            chains=tuple(
                ChainConfig(c["chain_id"], tuple(c["unit_labels"]))
                for c in data["readout"]["chains"]
            ),
            vdd=data["readout"].get("vdd", 3.3),
            adc_bits=data["readout"].get("adc_bits", 12),
            adc_slot_budget=data["readout"].get("adc_slot_budget", 33.33e-6),
            sample_phase=data["readout"].get("sample_phase", 0.5),
        )
        w = data["world"]
        world = WorldConfig(
            joint_channels=tuple(w["joint_channels"]),
            hall_channels=tuple(w["hall_channels"]),
            joint_params=JointSensorParams(**w.get("joint_params", {})),
            tactile_params=(
                TactileParams(**w["tactile_params"]) if w.get("tactile_params") else None
            ),
        )
        return ScenarioConfig(
            name=data["name"],
            readout=readout,
            world=world,
            trajectory=dict(data["trajectory"]),
            scan_rate=data.get("scan_rate", 1000.0),
            trials=data.get("trials", 5),
            seed=data.get("seed", 0),
            outputs=dict(data.get("outputs", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"invalid scenario config: {exc}") from exc


# -- pipeline helpers -------------------------------------------------------

def decode_capture(capture: Capture) -> np.ndarray:
    """Encode a capture to wire frames, decode it back, return the counts.

    Raises PipelineCorruption if the protocol round trip was not clean.
    """
    parser = FrameParser()
    frames = parser.feed(encode_capture(capture))
    parser.finish()
    if not parser.diagnostics.clean or len(frames) != capture.n_scans:
        raise PipelineCorruption(f"stream damage: {parser.diagnostics}")
    if sequence_gap_check(frames).missing_frames:
        raise PipelineCorruption("sequence gaps in decoded stream")
    return np.array([f.samples for f in frames], dtype=np.int64)


def _trajectory_params(config: ScenarioConfig) -> dict:
    return {k: v for k, v in config.trajectory.items() if k != "kind"}


def run_joint_characterization(
    config: ScenarioConfig,
    moving_unit: str,
    gt_rate: float = 100.0,
) -> MetricsReport:
    """Sinusoid characterization of one joint channel through the full pipeline.

    The moving unit is mounted at a 180 deg offset so the swing stays clear
    of the 0/360 wrap; the other joints sit at per-trial random fixed
    orientations, and any hall channels idle at their quiescent voltage.
    """
    if config.trajectory.get("kind") != "joint_sine":
        raise ScenarioError("config trajectory must be joint_sine")
    if moving_unit not in config.world.joint_channels:
        raise ScenarioError(f"{moving_unit!r} is not a configured joint channel")
    spec = _trajectory_params(config)
    cycles, period, amplitude = spec["cycles"], spec["period"], spec["amplitude"]
    duration = cycles * period

    plan = build_scan_plan(config.readout, config.scan_rate)
    layout = config.layout
    n_scans = int(round(duration * config.scan_rate))
    vdd = config.readout.vdd
    a_ref = reference_slope(vdd)
    tactile = config.world.tactile_params

    apes, rmses, stds = [], [], []
    for trial in range(config.trials):
        offset_rng, noise_rng = (
            np.random.default_rng(s)
            for s in np.random.SeedSequence([config.seed, trial]).spawn(2)
        )
        offsets = {
            ch: 180.0 if ch == moving_unit else float(offset_rng.uniform(0.0, 360.0))
            for ch in config.world.joint_channels
        }

        def channel_voltages(label: str, times: np.ndarray) -> np.ndarray:
            if label in offsets:
                params = replace(config.world.joint_params, offset_angle=offsets[label])
                angle = (
                    sine_angle(times, amplitude, period)
                    if label == moving_unit
                    else np.zeros_like(times)
                )
                noise = (
                    noise_rng.standard_normal(times.shape)
                    if params.noise_sigma > 0
                    else 0.0
                )
                return joint_sensor_voltage(angle, params, noise)
            # idle tactile channel
            v = np.full_like(times, tactile.quiescent_voltage)
            if tactile.noise_sigma > 0:
                v = v + tactile.noise_sigma * noise_rng.standard_normal(times.shape)
            return np.clip(v, 0.0, vdd)

        capture = capture_stream(plan, channel_voltages, n_scans)
        counts = decode_capture(capture)
        volts = demux_counts(counts, layout, vdd, config.readout.adc_bits)[moving_unit]
        slot = layout.slot_index(moving_unit)
        times = capture.timestamps_us() * 1e-6 + (slot + plan.sample_phase) * plan.slot_duration

        series = ChannelSeries(channel=moving_unit, times=times, values=volts)
        first = int(np.ceil(times[0] * gt_rate))
        last = int(np.floor(times[-1] * gt_rate))
        gt_times = np.arange(first, last + 1) / gt_rate
        delta_v = to_delta(align(series, gt_times))
        theta = sine_angle(gt_times, amplitude, period)
        delta_theta = theta - theta[0]

        slope = fit_slope_through_origin(delta_theta, delta_v.values)
        apes.append(ape_slope(slope, a_ref))
        _, rmse, std = estimation_errors(delta_v.values, delta_theta, vdd)
        rmses.append(rmse)
        stds.append(std)
    return MetricsReport(
        ape_slope_pct=np.array(apes),
        rmse_ref_deg=np.array(rmses),
        std_error_deg=np.array(stds),
    )


# -- tactile dataset --------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Sequence counts per split; test sequences use randomized press order."""

    train: int = 6
    val: int = 2
    test: int = 2


@dataclass
class TactileSequence:
    order: tuple[int, ...]
    times: np.ndarray  # seconds (frame times)
    volts: np.ndarray  # (n, 4) decoded channel voltages
    forces: np.ndarray  # ground-truth newtons at each frame
    classes: np.ndarray  # ground-truth contact class at each frame

    def segment(self, task: str) -> Segment:
        targets = self.forces if task == "force" else self.classes
        return Segment(values=self.volts, targets=targets)


@dataclass
class TactileSplits:
    train: list[TactileSequence]
    val: list[TactileSequence]
    test: list[TactileSequence]

    def windows(self, sequence_length: int, task: str):
        """(train, val, test) WindowDatasets normalized with training stats."""
        train_segments = [s.segment(task) for s in self.train]
        stats = compute_stats(train_segments)
        return tuple(
            build_windows([s.segment(task) for s in split], sequence_length, stats)
            for split in (self.train, self.val, self.test)
        )


def _tactile_sequence(
    config: ScenarioConfig, order: Sequence[int], stream_index: int
) -> TactileSequence:
    spec = _trajectory_params(config)
    tactile = config.world.tactile_params
    traj = indentation_trajectory(
        order=tuple(order),
        peak_force=spec["peak_force"],
        feed_rate=spec["feed_rate"],
        params=tactile,
        rate=config.scan_rate,
        dwell=spec["dwell"],
    )
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1000 + stream_index]))
    channels = make_hall_channels(traj, tactile, rng)
    hall_fn = {lab: channels[k] for k, lab in enumerate(config.world.hall_channels)}

    plan = build_scan_plan(config.readout, config.scan_rate)
    n_scans = int(round(traj.duration * config.scan_rate))
    capture = capture_stream(plan, lambda lab, t: hall_fn[lab](t), n_scans)
    counts = decode_capture(capture)
    volts_by_ch = demux_counts(counts, config.layout, config.readout.vdd, config.readout.adc_bits)
    volts = np.stack([volts_by_ch[lab] for lab in config.world.hall_channels], axis=1)

    frame_times = capture.timestamps_us() * 1e-6
    forces = np.interp(frame_times, traj.times, traj.contact_forces)
    idx = np.clip(np.searchsorted(traj.times, frame_times, side="right") - 1, 0, None)
    classes = traj.contact_classes[idx]
    return TactileSequence(
        order=tuple(order), times=frame_times, volts=volts, forces=forces, classes=classes
    )


def run_tactile_dataset(
    config: ScenarioConfig, split_spec: SplitSpec = SplitSpec()
) -> TactileSplits:
    """Generate the train/val/test indentation sequences through the pipeline.

    Train and validation sequences press locations 1-4 in fixed order; test
    sequences use seeded random permutations.
    """
    if config.trajectory.get("kind") != "indentation":
        raise ScenarioError("config trajectory must be indentation")
    if not config.world.hall_channels:
        raise ScenarioError("config has no hall channels")
    splits: dict[str, list[TactileSequence]] = {"train": [], "val": [], "test": []}
    index = 0
    for _ in range(split_spec.train):
        splits["train"].append(_tactile_sequence(config, (1, 2, 3, 4), index))
        index += 1
    for _ in range(split_spec.val):
        splits["val"].append(_tactile_sequence(config, (1, 2, 3, 4), index))
        index += 1
    for _ in range(split_spec.test):
        order_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2000 + index]))
        order = tuple(int(v) for v in order_rng.permutation([1, 2, 3, 4]))
        splits["test"].append(_tactile_sequence(config, order, index))
        index += 1
    return TactileSplits(train=splits["train"], val=splits["val"], test=splits["test"])
