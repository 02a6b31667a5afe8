"""Cycle-accurate simulation of a SIPO shift-register analog readout.

The readout is organized as parallel chains of (D flip-flop, analog switch,
sensor) units sharing a clock and one analog output line.  A single high
pulse injected into a chain walks down its flip-flops at each clock edge,
connecting one sensor per clock cycle to the shared ADC input.  A full scan
visits every unit of every selected chain once; the full-scan rate equals
the clock frequency divided by the slot count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class ReadoutError(Exception):
    """Base class for readout configuration and protocol violations."""


class MultipleActive(ReadoutError):
    """More than one flip-flop output is high on a single chain."""


class SlotBudgetExceeded(ReadoutError):
    """Requested scan rate leaves less slot time than the ADC needs."""

    def __init__(self, requested_rate: float, max_rate: float):
        self.requested_rate = requested_rate
        self.max_rate = max_rate
        super().__init__(
            f"scan rate {requested_rate:g} Hz exceeds the ADC slot budget; "
            f"maximum feasible rate is {max_rate:g} Hz"
        )


@dataclass(frozen=True)
class ChainConfig:
    """One series chain of sensing units."""

    chain_id: int
    unit_labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.unit_labels) < 1:
            raise ReadoutError(f"chain {self.chain_id} must have at least one unit")
        object.__setattr__(self, "unit_labels", tuple(self.unit_labels))

    @property
    def unit_count(self) -> int:
        return len(self.unit_labels)


@dataclass(frozen=True)
class ReadoutConfig:
    """Electrical and timing parameters of the whole readout system.

    adc_slot_budget is the minimum slot duration the ADC needs (settling
    plus conversion); sample_phase is the fraction of the slot at which the
    ADC takes its sample.
    """

    chains: tuple[ChainConfig, ...]
    vdd: float = 3.3
    adc_bits: int = 12
    adc_slot_budget: float = 33.33e-6
    sample_phase: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        if not self.chains:
            raise ReadoutError("at least one chain is required")
        ids = [c.chain_id for c in self.chains]
        if len(set(ids)) != len(ids):
            raise ReadoutError("chain ids must be unique")
        labels = [lab for c in self.chains for lab in c.unit_labels]
        if len(set(labels)) != len(labels):
            raise ReadoutError("unit labels must be globally unique")
        if self.vdd <= 0:
            raise ReadoutError("vdd must be positive")
        if self.adc_bits < 1:
            raise ReadoutError("adc_bits must be >= 1")
        if self.adc_slot_budget <= 0:
            raise ReadoutError("adc_slot_budget must be positive")
        if not 0.0 < self.sample_phase <= 1.0:
            raise ReadoutError("sample_phase must be in (0, 1]")

    @property
    def total_units(self) -> int:
        return sum(c.unit_count for c in self.chains)

    def chain(self, chain_id: int) -> ChainConfig:
        for c in self.chains:
            if c.chain_id == chain_id:
                return c
        raise ReadoutError(f"unknown chain id {chain_id}")


@dataclass(frozen=True)
class ChainState:
    """Flip-flop outputs of one chain plus the value at the first D input."""

    flip_flop_outputs: tuple[int, ...]
    pending_input: int = 0

    @property
    def unit_count(self) -> int:
        return len(self.flip_flop_outputs)


def new_chain_state(unit_count: int) -> ChainState:
    return ChainState(flip_flop_outputs=(0,) * unit_count)


def step_chain(state: ChainState, input_bit: int) -> ChainState:
    """Advance one rising clock edge: shift the pulse one position down."""
    bit = 1 if input_bit else 0
    outs = (bit,) + state.flip_flop_outputs[:-1]
    return ChainState(flip_flop_outputs=outs, pending_input=0)


def active_slot(state: ChainState) -> Optional[int]:
    """Index of the single high output, or None when the chain is idle."""
    active = [k for k, q in enumerate(state.flip_flop_outputs) if q]
    if len(active) > 1:
        raise MultipleActive(f"outputs {active} are simultaneously high")
    return active[0] if active else None


def mux_output(state: ChainState, sensor_voltages: Sequence[float]) -> float:
    """Voltage on the shared line: the active sensor's output, or 0 V idle."""
    if len(sensor_voltages) != state.unit_count:
        raise ReadoutError("sensor voltage count does not match chain length")
    slot = active_slot(state)
    if slot is None:
        return 0.0
    return float(sensor_voltages[slot])


@dataclass(frozen=True)
class Slot:
    chain_id: int
    unit_index: int
    channel: Optional[str]  # None for guard (idle) slots


@dataclass(frozen=True)
class ScanPlan:
    """Slot schedule for one full scan plus the ADC parameters needed to run it."""

    scan_rate: float
    clock_frequency: float
    slot_duration: float
    slots: tuple[Slot, ...]
    selected_chains: tuple[int, ...]
    chain_units: tuple[tuple[int, tuple[str, ...]], ...]
    vdd: float
    adc_bits: int
    sample_phase: float

    @property
    def slot_count(self) -> int:
        return len(self.slots)

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(s.channel for s in self.slots if s.channel is not None)


@dataclass(frozen=True)
class SampleFrame:
    """One full scan's ADC counts with its sequence number and start time."""

    sequence: int
    timestamp_us: int
    samples: tuple[int, ...]


def _resolve_chains(
    config: ReadoutConfig, selected_chains: Optional[Sequence[int]]
) -> list[ChainConfig]:
    if selected_chains is None:
        return list(config.chains)
    selected = list(selected_chains)
    if not selected:
        raise ReadoutError("selected_chains must be nonempty")
    known = {c.chain_id for c in config.chains}
    unknown = set(selected) - known
    if unknown:
        raise ReadoutError(f"unknown chain ids {sorted(unknown)}")
    # preserve configured order
    return [c for c in config.chains if c.chain_id in set(selected)]


def _slot_count(config: ReadoutConfig, chains: list[ChainConfig], guard_slots: int) -> int:
    n = sum(c.unit_count for c in chains)
    if len(chains) > 1:
        n += guard_slots * (len(chains) - 1)
    return n


def max_scan_rate(
    config: ReadoutConfig,
    selected_chains: Optional[Sequence[int]] = None,
    guard_slots: int = 0,
) -> float:
    """Fastest full-scan rate the ADC slot budget allows."""
    chains = _resolve_chains(config, selected_chains)
    n = _slot_count(config, chains, guard_slots)
    return 1.0 / (n * config.adc_slot_budget)


def build_scan_plan(
    config: ReadoutConfig,
    scan_rate: float,
    selected_chains: Optional[Sequence[int]] = None,
    guard_slots: int = 0,
) -> ScanPlan:
    """Schedule one full scan over the selected chains.

    Chains are scanned back to back: the pulse for chain c is injected on
    the clock edge after chain c-1's pulse exits (plus any guard slots).
    """
    if scan_rate <= 0:
        raise ReadoutError("scan_rate must be positive")
    if guard_slots < 0:
        raise ReadoutError("guard_slots must be >= 0")
    chains = _resolve_chains(config, selected_chains)
    n_slots = _slot_count(config, chains, guard_slots)
    slot_duration = 1.0 / (scan_rate * n_slots)
    if slot_duration < config.adc_slot_budget:
        raise SlotBudgetExceeded(scan_rate, max_scan_rate(config, selected_chains, guard_slots))
    slots: list[Slot] = []
    for k, chain in enumerate(chains):
        if k > 0:
            slots.extend(Slot(chain.chain_id, -1, None) for _ in range(guard_slots))
        slots.extend(
            Slot(chain.chain_id, i, lab) for i, lab in enumerate(chain.unit_labels)
        )
    return ScanPlan(
        scan_rate=scan_rate,
        clock_frequency=scan_rate * n_slots,
        slot_duration=slot_duration,
        slots=tuple(slots),
        selected_chains=tuple(c.chain_id for c in chains),
        chain_units=tuple((c.chain_id, c.unit_labels) for c in chains),
        vdd=config.vdd,
        adc_bits=config.adc_bits,
        sample_phase=config.sample_phase,
    )


def quantize(voltage, vdd: float, adc_bits: int):
    """Round-to-nearest ADC conversion over [0, vdd], clamping out-of-range."""
    full_scale = (1 << adc_bits) - 1
    v = np.clip(np.asarray(voltage, dtype=float), 0.0, vdd)
    return np.floor(v / vdd * full_scale + 0.5).astype(np.int64)


def run_scan(
    plan: ScanPlan,
    voltages_at: Callable[[str, float], float],
    scan_start: float = 0.0,
    sequence: int = 0,
) -> SampleFrame:
    """Run one full scan by clocking the flip-flop chains edge by edge.

    voltages_at(channel_label, t) gives the sensor voltage on that channel
    at time t.  The ADC samples mid-slot (per plan.sample_phase) and
    quantizes over [0, vdd].
    """
    states = {cid: new_chain_state(len(labels)) for cid, labels in plan.chain_units}
    labels = dict(plan.chain_units)
    # clock edge at which each chain's pulse is injected
    inject: dict[int, int] = {}
    for i, slot in enumerate(plan.slots):
        if slot.channel is not None and slot.chain_id not in inject:
            inject[slot.chain_id] = i

    counts: list[int] = []
    for i, slot in enumerate(plan.slots):
        for cid in states:
            states[cid] = step_chain(states[cid], 1 if inject.get(cid) == i else 0)
        t = scan_start + (i + plan.sample_phase) * plan.slot_duration
        line = 0.0
        for cid, state in states.items():
            pos = active_slot(state)
            if pos is not None:
                # sanity: the clocked chain must agree with the schedule
                assert slot.channel == labels[cid][pos]
                line = mux_output(
                    state, [voltages_at(lab, t) for lab in labels[cid]]
                )
        counts.append(int(quantize(line, plan.vdd, plan.adc_bits)))
    return SampleFrame(
        sequence=sequence,
        timestamp_us=int(round(scan_start * 1e6)),
        samples=tuple(counts),
    )


@dataclass
class Capture:
    """A contiguous run of full scans, stored as a counts matrix."""

    plan: ScanPlan
    start: float
    counts: np.ndarray  # (n_scans, n_slots) int64
    scan_starts: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.counts.shape[0]
        self.scan_starts = self.start + np.arange(n) / self.plan.scan_rate

    @property
    def n_scans(self) -> int:
        return self.counts.shape[0]

    def slot_times(self, slot_index: int) -> np.ndarray:
        """ADC sample times of one slot across all scans."""
        offset = (slot_index + self.plan.sample_phase) * self.plan.slot_duration
        return self.scan_starts + offset

    def timestamps_us(self) -> np.ndarray:
        return np.round(self.scan_starts * 1e6).astype(np.int64)

    def iter_frames(self) -> Iterator[SampleFrame]:
        ts = self.timestamps_us()
        for i in range(self.n_scans):
            yield SampleFrame(
                sequence=i, timestamp_us=int(ts[i]), samples=tuple(int(c) for c in self.counts[i])
            )


def capture_stream(
    plan: ScanPlan,
    channel_voltages: Callable[[str, np.ndarray], np.ndarray],
    n_scans: int,
    start: float = 0.0,
) -> Capture:
    """Vectorized equivalent of repeated run_scan calls.

    channel_voltages(label, times) is evaluated exactly once per channel,
    in slot order, with the full vector of that channel's sample times.
    Guard slots read the idle line (0 V, count 0).
    """
    counts = np.zeros((n_scans, plan.slot_count), dtype=np.int64)
    scan_starts = start + np.arange(n_scans) / plan.scan_rate
    for j, slot in enumerate(plan.slots):
        if slot.channel is None:
            continue
        times = scan_starts + (j + plan.sample_phase) * plan.slot_duration
        v = channel_voltages(slot.channel, times)
        counts[:, j] = quantize(v, plan.vdd, plan.adc_bits)
    return Capture(plan=plan, start=start, counts=counts)
