"""Command-line interface.

Subcommands: simulate, characterize-joint, characterize-tactile, train,
infer, codec.  Every command writes a run manifest next to its outputs.

Exit codes: 0 success, 2 configuration error, 3 real-time budget violation,
4 data corruption.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .estimation import demux_counts
from .evaluation import evaluate_tactile
from .lstm.data import Segment, build_windows
from .lstm.models import ContactClassifier, ForceRegressor, infer_stream, load_model
from .lstm.train import EmptyDataset
from .protocol import FrameParser, encode_frame, sequence_gap_check
from .readout import ReadoutError, SampleFrame, SlotBudgetExceeded, build_scan_plan, capture_stream
from .scenarios import (
    PRESET_NAMES,
    ScenarioConfig,
    ScenarioError,
    UnknownPreset,
    config_from_dict,
    config_to_dict,
    preset,
    run_joint_characterization,
    run_tactile_dataset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_CORRUPT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("SHIFTSCAN_OUT_DIR")
    if not out:
        raise CliError("no output directory: pass --out or set SHIFTSCAN_OUT_DIR", EXIT_CONFIG)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> ScenarioConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_CONFIG)
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}:{exc.lineno}: invalid JSON: {exc.msg}", EXIT_CONFIG)
        try:
            config = config_from_dict(data)
        except (ScenarioError, ReadoutError) as exc:
            raise CliError(f"{args.config}: {exc}", EXIT_CONFIG)
    else:
        try:
            config = preset(args.preset)
        except UnknownPreset as exc:
            raise CliError(str(exc), EXIT_CONFIG)
    overrides = {}
    if getattr(args, "scan_rate", None) is not None:
        overrides["scan_rate"] = args.scan_rate
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        data = config_to_dict(config)
        data.update(overrides)
        config = config_from_dict(data)
    return config


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(out: Path, command: str, seed, cfg_hash: str, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg_hash,
        "seed": seed,
        "start_time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "tool_version": __version__,
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- simulate ----------------------------------------------------------------

def _waveform_csv(config: ScenarioConfig, capture, channel_fn) -> str:
    """Oscilloscope-style rendering: two rows per clock cycle.

    Columns: time_s, vout_V, clock, slot, then one pulse column per chain
    (high during the half-cycle before that chain's pulse is loaded).
    """
    plan = capture.plan
    chains = plan.selected_chains
    header = ["time_s", "vout_V", "clock", "slot"] + [f"pulse_c{cid}" for cid in chains]
    inject: dict[int, int] = {}
    for j, slot in enumerate(plan.slots):
        if slot.channel is not None and slot.chain_id not in inject:
            inject[slot.chain_id] = j
    lines = [",".join(header)]
    full_scale = (1 << plan.adc_bits) - 1
    for i in range(capture.n_scans):
        scan_t = capture.scan_starts[i]
        for j in range(plan.slot_count):
            vout = capture.counts[i, j] * plan.vdd / full_scale
            for half, clock in ((0, 1), (1, 0)):
                t = scan_t + (j + 0.5 * half) * plan.slot_duration
                pulses = [
                    1 if (half == 1 and inject.get(cid) == j + 1) else 0 for cid in chains
                ]
                if j == 0 and half == 0:
                    # the first slot's pulse was raised just before this scan
                    pulses = [1 if inject.get(cid) == 0 else p for cid, p in zip(chains, pulses)]
                row = [f"{t:.9f}", f"{vout:.6f}", str(clock), str(j)] + [str(p) for p in pulses]
                lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    try:
        plan = build_scan_plan(config.readout, config.scan_rate)
    except SlotBudgetExceeded as exc:
        raise CliError(str(exc), EXIT_BUDGET)
    except ReadoutError as exc:
        raise CliError(str(exc), EXIT_CONFIG)

    rng = np.random.default_rng(config.seed)
    kinds = config.world.kinds
    tactile = config.world.tactile_params
    jp = config.world.joint_params

    def channel_fn(label: str, times: np.ndarray) -> np.ndarray:
        # constant-pose snapshot: joints at 180 deg, tactile at rest
        if kinds[label] == "joint":
            base = 180.0 * jp.vdd / 360.0
            noise = jp.noise_sigma * rng.standard_normal(times.shape)
        else:
            base = tactile.quiescent_voltage
            noise = tactile.noise_sigma * rng.standard_normal(times.shape)
        return np.clip(base + noise, 0.0, config.readout.vdd)

    n_scans = int(round(args.duration * config.scan_rate))
    capture = capture_stream(plan, channel_fn, n_scans)

    stream_path = out / "stream.bin"
    from .protocol import encode_capture

    stream_path.write_bytes(encode_capture(capture))
    waveform_path = out / "waveform.csv"
    waveform_path.write_text(_waveform_csv(config, capture, channel_fn))
    write_manifest(out, "simulate", config.seed, config_hash(config),
                   [stream_path.name, waveform_path.name])
    print(f"wrote {n_scans} frames ({plan.slot_count} slots each) to {stream_path}")
    return EXIT_OK


# -- characterize-joint -------------------------------------------------------

def cmd_characterize_joint(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    moving = args.moving_unit
    try:
        report = run_joint_characterization(config, moving)
    except SlotBudgetExceeded as exc:
        raise CliError(str(exc), EXIT_BUDGET)
    except (ScenarioError, ReadoutError) as exc:
        raise CliError(str(exc), EXIT_CONFIG)

    csv_lines = ["trial,ape_slope_pct,rmse_ref_deg,std_error_deg"]
    for k in range(report.n_trials):
        csv_lines.append(
            f"{k},{report.ape_slope_pct[k]:.9g},{report.rmse_ref_deg[k]:.9g},"
            f"{report.std_error_deg[k]:.9g}"
        )
    trials_path = out / "trials.csv"
    trials_path.write_text("\n".join(csv_lines) + "\n")
    report_path = out / "report.txt"
    report_path.write_text(report.to_text())
    write_manifest(out, "characterize-joint", config.seed, config_hash(config),
                   [trials_path.name, report_path.name])
    print(report.to_text(), end="")
    return EXIT_OK


# -- characterize-tactile ------------------------------------------------------

def _sequence_csv(seq) -> str:
    lines = ["time_s,h0,h1,h2,h3,force_N,class"]
    for i in range(len(seq.times)):
        volts = ",".join(f"{v:.6f}" for v in seq.volts[i])
        lines.append(f"{seq.times[i]:.6f},{volts},{seq.forces[i]:.6f},{seq.classes[i]}")
    return "\n".join(lines) + "\n"


def _read_sequence_csv(path: Path) -> Segment | None:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        return None
    volts = np.stack([data[f"h{k}"] for k in range(4)], axis=1)
    return volts, data["force_N"], data["class"].astype(np.int64)


def cmd_characterize_tactile(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    try:
        splits = run_tactile_dataset(config)
    except (ScenarioError, ReadoutError) as exc:
        raise CliError(str(exc), EXIT_CONFIG)

    outputs = []
    for split_name, seqs in (("train", splits.train), ("val", splits.val), ("test", splits.test)):
        split_dir = out / "datasets" / split_name
        split_dir.mkdir(parents=True, exist_ok=True)
        for k, seq in enumerate(seqs):
            path = split_dir / f"seq{k:02d}.csv"
            path.write_text(_sequence_csv(seq))
            outputs.append(str(path.relative_to(out)))

    force_model = ForceRegressor(max_epochs=args.max_epochs, seed=config.seed)
    contact_model = ContactClassifier(max_epochs=args.max_epochs, seed=config.seed)
    for model, task in ((force_model, "force"), (contact_model, "contact")):
        train_ds, val_ds, _ = splits.windows(model.sequence_length, task)
        model.fit(train_ds, val_ds)
        model_path = out / f"model_{task}.bin"
        model.save(model_path)
        (out / f"history_{task}.csv").write_text(model.history_.to_csv())
        outputs += [model_path.name, f"history_{task}.csv"]

    result = evaluate_tactile(splits, force_model, contact_model)
    pred_lines = ["time_s,f_true_N,f_est_N,class_true,class_est"]
    for i in range(len(result.times)):
        pred_lines.append(
            f"{result.times[i]:.6f},{result.force_true[i]:.6f},{result.force_est[i]:.6f},"
            f"{result.class_true[i]},{result.class_est[i]}"
        )
    (out / "test_predictions.csv").write_text("\n".join(pred_lines) + "\n")
    (out / "summary.txt").write_text(result.summary_text())
    outputs += ["test_predictions.csv", "summary.txt"]
    write_manifest(out, "characterize-tactile", config.seed, config_hash(config), outputs)
    print(result.summary_text(), end="")
    return EXIT_OK


# -- train / infer ------------------------------------------------------------

def _load_split_segments(data_dir: Path, split: str, task: str) -> list[Segment]:
    split_dir = data_dir / split
    if not split_dir.is_dir():
        raise CliError(f"missing dataset split directory {split_dir}", EXIT_CONFIG)
    segments = []
    for path in sorted(split_dir.glob("*.csv")):
        parsed = _read_sequence_csv(path)
        if parsed is None:
            continue
        volts, forces, classes = parsed
        segments.append(Segment(values=volts, targets=forces if task == "force" else classes))
    if not segments:
        raise CliError(f"no sequence CSVs in {split_dir}", EXIT_CONFIG)
    return segments


def cmd_train(args) -> int:
    out = _out_dir(args)
    data_dir = Path(args.data)
    model_cls = {"force": ForceRegressor, "contact": ContactClassifier}[args.task]
    model = model_cls(max_epochs=args.max_epochs, patience=args.patience, seed=args.seed)
    train_segments = _load_split_segments(data_dir, "train", args.task)
    val_segments = _load_split_segments(data_dir, "val", args.task)
    try:
        train_ds = build_windows(train_segments, model.sequence_length)
        val_ds = build_windows(val_segments, model.sequence_length, train_ds.stats)
        model.fit(train_ds, val_ds)
    except (EmptyDataset, ValueError) as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    model_path = out / f"model_{args.task}.bin"
    model.save(model_path)
    history_path = out / f"history_{args.task}.csv"
    history_path.write_text(model.history_.to_csv())
    write_manifest(out, "train", args.seed, hashlib.sha256(
        json.dumps(model.get_params(), sort_keys=True, default=str).encode()).hexdigest(),
        [model_path.name, history_path.name])
    print(f"best epoch {model.history_.best_epoch}, "
          f"val loss {min(model.history_.val_loss):.6g}")
    return EXIT_OK


def _read_stream_volts(path: Path) -> np.ndarray:
    """4-channel volt stream from a wire-frame binary or a sequence CSV."""
    if path.suffix == ".csv":
        parsed = _read_sequence_csv(path)
        if parsed is None:
            raise CliError(f"{path}: empty stream", EXIT_CONFIG)
        return parsed[0]
    parser = FrameParser()
    frames = parser.feed(path.read_bytes())
    parser.finish()
    if parser.diagnostics.crc_failures or parser.diagnostics.truncated_frames:
        raise CliError(f"{path}: corrupt stream: {parser.diagnostics}", EXIT_CORRUPT)
    if not frames:
        raise CliError(f"{path}: no frames decoded", EXIT_CORRUPT)
    counts = np.array([f.samples for f in frames], dtype=float)
    if counts.shape[1] != 4:
        raise CliError(
            f"{path}: expected 4-channel tactile frames, got {counts.shape[1]} channels",
            EXIT_CONFIG,
        )
    return counts * 3.3 / 4095.0


def cmd_infer(args) -> int:
    out = _out_dir(args)
    try:
        model = load_model(args.model)
    except Exception as exc:
        raise CliError(f"cannot load model: {exc}", EXIT_CONFIG)
    if model.task != args.task:
        raise CliError(
            f"model file holds a {model.task!r} model but --task is {args.task!r}",
            EXIT_CONFIG,
        )
    stream = _read_stream_volts(Path(args.stream))
    if stream.shape[0] < model.sequence_length:
        raise CliError(
            f"stream shorter than the model window ({model.sequence_length})", EXIT_CONFIG
        )
    budget_s = args.budget_ms * 1e-3
    report = infer_stream(stream, model, budget_s)
    lines = ["index,prediction"]
    for i, p in enumerate(report.predictions):
        lines.append(f"{i},{p:.6f}" if model.task == "force" else f"{i},{int(p)}")
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    (out / "latency.txt").write_text(report.to_text())
    write_manifest(out, "infer", None, "-", ["predictions.csv", "latency.txt"])
    print(report.to_text(), end="")
    if report.p99_latency_s > budget_s:
        print("p99 latency exceeds budget", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


# -- codec ---------------------------------------------------------------------

def _frames_to_csv(frames) -> str:
    lines = ["sequence,timestamp_us," + ",".join(
        f"s{k}" for k in range(len(frames[0].samples) if frames else 0)
    )]
    for f in frames:
        lines.append(f"{f.sequence},{f.timestamp_us}," + ",".join(str(s) for s in f.samples))
    return "\n".join(lines) + "\n"


def cmd_codec(args) -> int:
    src = Path(args.input)
    dst = Path(args.output)
    if not src.exists():
        raise CliError(f"input file {src} not found", EXIT_CONFIG)
    if args.direction == "encode":
        data = np.genfromtxt(src, delimiter=",", names=True, dtype=None)
        data = np.atleast_1d(data)
        sample_cols = [n for n in data.dtype.names if n not in ("sequence", "timestamp_us")]
        blob = bytearray()
        for row in data:
            frame = SampleFrame(
                sequence=int(row["sequence"]),
                timestamp_us=int(row["timestamp_us"]),
                samples=tuple(int(row[c]) for c in sample_cols),
            )
            blob += encode_frame(frame)
        dst.write_bytes(bytes(blob))
        print(f"encoded {len(data)} frames")
        return EXIT_OK
    parser = FrameParser()
    frames = parser.feed(src.read_bytes())
    parser.finish()
    diag = parser.diagnostics
    gaps = sequence_gap_check(frames)
    if frames:
        dst.write_text(_frames_to_csv(frames))
    else:
        dst.write_text("sequence,timestamp_us\n")
    print(
        f"frames = {len(frames)}\n"
        f"crc_failures = {diag.crc_failures}\n"
        f"resyncs = {diag.resyncs}\n"
        f"dropped_bytes = {diag.dropped_bytes}\n"
        f"truncated_frames = {diag.truncated_frames}\n"
        f"missing_frames = {gaps.missing_frames}"
    )
    if not diag.clean:
        return EXIT_CORRUPT
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftscan",
        description="SIPO shift-register sensor readout simulator and pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, default_preset):
        group = p.add_mutually_exclusive_group()
        group.add_argument("--preset", default=default_preset, choices=PRESET_NAMES)
        group.add_argument("--config", help="scenario config JSON file")
        p.add_argument("--scan-rate", type=float, default=None, help="full-scan rate, Hz")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory (or $SHIFTSCAN_OUT_DIR)")

    p = sub.add_parser("simulate", help="capture a frame stream and waveform CSV")
    add_config_args(p, "full_hand")
    p.add_argument("--duration", type=float, default=0.1, help="capture length, seconds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("characterize-joint", help="joint sensor characterization table")
    add_config_args(p, "middle_finger_only")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--moving-unit", default="m2")
    p.set_defaults(func=cmd_characterize_joint)

    p = sub.add_parser("characterize-tactile", help="tactile datasets, training, test report")
    add_config_args(p, "tactile_bench")
    p.add_argument("--max-epochs", type=int, default=80)
    p.set_defaults(func=cmd_characterize_tactile, scan_rate_default=25.0)

    p = sub.add_parser("train", help="train a model from dataset CSVs")
    p.add_argument("--task", required=True, choices=("force", "contact"))
    p.add_argument("--data", required=True, help="directory with train/ and val/ CSVs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=20)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="streaming inference with a latency budget")
    p.add_argument("--task", required=True, choices=("force", "contact"))
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True, help="wire-frame .bin or sequence .csv")
    p.add_argument("--budget-ms", type=float, default=1.0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("codec", help="convert between frame binary and CSV")
    p.add_argument("direction", choices=("encode", "decode"))
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_codec)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # characterize-tactile defaults to a desk-scale 25 Hz dataset rate
    if args.command == "characterize-tactile" and args.scan_rate is None:
        args.scan_rate = 25.0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
