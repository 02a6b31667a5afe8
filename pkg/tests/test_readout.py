"""Unit tests for the shift-register readout core."""

import numpy as np
import pytest

from shiftscan.readout import (
    Capture,
    ChainConfig,
    ChainState,
    MultipleActive,
    ReadoutConfig,
    ReadoutError,
    SlotBudgetExceeded,
    active_slot,
    build_scan_plan,
    capture_stream,
    max_scan_rate,
    mux_output,
    new_chain_state,
    quantize,
    run_scan,
    step_chain,
)


def twenty_unit_config(**kwargs) -> ReadoutConfig:
    chains = (
        ChainConfig(0, tuple(f"t{k}" for k in range(4))),
        ChainConfig(1, ("i0", "i1", "i2", "h0", "h1", "h2", "h3")),
        ChainConfig(2, ("m0", "m1", "m2")),
        ChainConfig(3, ("r0", "r1", "r2")),
        ChainConfig(4, ("p0", "p1", "p2")),
    )
    return ReadoutConfig(chains=chains, **kwargs)


class TestStepChain:
    def test_pulse_enters(self):
        s = ChainState((0, 0, 0))
        assert step_chain(s, 1).flip_flop_outputs == (1, 0, 0)

    def test_pulse_moves(self):
        s = ChainState((1, 0, 0))
        assert step_chain(s, 0).flip_flop_outputs == (0, 1, 0)

    def test_pulse_exits(self):
        s = ChainState((0, 0, 1))
        assert step_chain(s, 0).flip_flop_outputs == (0, 0, 0)

    def test_pure_function(self):
        s = ChainState((1, 0, 0))
        step_chain(s, 0)
        assert s.flip_flop_outputs == (1, 0, 0)


class TestActiveSlot:
    def test_single_active(self):
        assert active_slot(ChainState((0, 1, 0))) == 1

    def test_idle(self):
        assert active_slot(ChainState((0, 0, 0))) is None

    def test_multiple_active(self):
        with pytest.raises(MultipleActive):
            active_slot(ChainState((1, 1, 0)))


class TestMuxOutput:
    def test_selects_active(self):
        assert mux_output(ChainState((0, 1, 0)), [1.0, 2.0, 3.0]) == 2.0

    def test_idle_line_is_zero(self):
        assert mux_output(ChainState((0, 0, 0)), [1.0, 2.0, 3.0]) == 0.0

    def test_last_slot(self):
        assert mux_output(ChainState((0, 0, 1)), [0.5, 0.5, 3.3]) == 3.3

    def test_length_mismatch(self):
        with pytest.raises(ReadoutError):
            mux_output(ChainState((0, 1)), [1.0])


class TestPulseConservation:
    def test_random_chains(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(1, 65))
            state = new_chain_state(n)
            for edge in range(n + 5):
                state = step_chain(state, 1 if edge == 0 else 0)
                pos = active_slot(state)  # raises MultipleActive on violation
                if edge < n:
                    assert pos == edge
                else:
                    assert pos is None


class TestScanPlan:
    def test_full_hand_1khz(self):
        plan = build_scan_plan(twenty_unit_config(), 1000.0)
        assert plan.slot_count == 20
        assert plan.clock_frequency == 20000.0
        assert plan.slot_duration == pytest.approx(50e-6)

    def test_30khz_clock_accepted(self):
        plan = build_scan_plan(twenty_unit_config(), 1500.0)
        assert plan.clock_frequency == 30000.0

    def test_budget_violation(self):
        with pytest.raises(SlotBudgetExceeded) as exc:
            build_scan_plan(twenty_unit_config(), 2000.0)
        assert exc.value.requested_rate == 2000.0
        assert exc.value.max_rate == pytest.approx(1500.0, rel=1e-3)

    def test_slot_clock_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n_chains = int(rng.integers(1, 5))
            chains = tuple(
                ChainConfig(c, tuple(f"c{c}u{k}" for k in range(int(rng.integers(1, 8)))))
                for c in range(n_chains)
            )
            config = ReadoutConfig(chains=chains)
            rate = float(rng.uniform(1.0, 100.0))
            plan = build_scan_plan(config, rate)
            assert plan.clock_frequency == plan.scan_rate * plan.slot_count

    def test_selected_chains(self):
        plan = build_scan_plan(twenty_unit_config(), 1000.0, selected_chains=[2])
        assert plan.slot_count == 3
        assert plan.channels == ("m0", "m1", "m2")

    def test_guard_slots(self):
        plan = build_scan_plan(twenty_unit_config(), 100.0, guard_slots=1)
        assert plan.slot_count == 24
        guards = [s for s in plan.slots if s.channel is None]
        assert len(guards) == 4

    def test_slot_order_matches_chain_order(self):
        plan = build_scan_plan(twenty_unit_config(), 1000.0)
        assert plan.channels == (
            "t0", "t1", "t2", "t3",
            "i0", "i1", "i2", "h0", "h1", "h2", "h3",
            "m0", "m1", "m2", "r0", "r1", "r2", "p0", "p1", "p2",
        )


class TestMaxScanRate:
    def test_twenty_units(self):
        assert max_scan_rate(twenty_unit_config()) == pytest.approx(1500.0, rel=1e-3)

    def test_ten_units(self):
        config = ReadoutConfig(chains=(ChainConfig(0, tuple(f"u{k}" for k in range(10))),))
        assert max_scan_rate(config) == pytest.approx(3000.0, rel=1e-3)

    def test_one_unit_one_second(self):
        config = ReadoutConfig(chains=(ChainConfig(0, ("u0",)),), adc_slot_budget=1.0)
        assert max_scan_rate(config) == pytest.approx(1.0)


class TestQuantize:
    def test_full_scale(self):
        assert quantize(3.3, 3.3, 12) == 4095

    def test_zero(self):
        assert quantize(0.0, 3.3, 12) == 0

    def test_midscale_rounds_to_nearest(self):
        assert quantize(1.65, 3.3, 12) == int(np.floor(1.65 / 3.3 * 4095 + 0.5))

    def test_clamping(self):
        assert quantize(-1.0, 3.3, 12) == 0
        assert quantize(5.0, 3.3, 12) == 4095


class TestRunScan:
    def test_constant_channels(self):
        config = twenty_unit_config()
        plan = build_scan_plan(config, 1000.0)
        levels = {lab: 0.1 + 0.15 * i for i, lab in enumerate(plan.channels)}
        frame = run_scan(plan, lambda lab, t: levels[lab])
        expected = tuple(int(quantize(levels[lab], 3.3, 12)) for lab in plan.channels)
        assert frame.samples == expected

    def test_sample_times_mid_slot(self):
        config = ReadoutConfig(chains=(ChainConfig(0, ("a", "b")),))
        plan = build_scan_plan(config, 100.0)
        seen = []
        run_scan(plan, lambda lab, t: seen.append((lab, t)) or 0.0)
        assert seen == [
            ("a", pytest.approx(0.5 * plan.slot_duration)),
            ("b", pytest.approx(0.5 * plan.slot_duration)),
            ("a", pytest.approx(1.5 * plan.slot_duration)),
            ("b", pytest.approx(1.5 * plan.slot_duration)),
        ]

    def test_clock_scaling_leaves_constant_values_unchanged(self):
        config = twenty_unit_config()
        levels = {}
        plan1 = build_scan_plan(config, 500.0)
        levels = {lab: 0.05 * (i + 1) for i, lab in enumerate(plan1.channels)}
        f1 = run_scan(plan1, lambda lab, t: levels[lab])
        plan2 = build_scan_plan(config, 1000.0)
        f2 = run_scan(plan2, lambda lab, t: levels[lab])
        assert f1.samples == f2.samples
        assert plan1.slot_duration == pytest.approx(2.0 * plan2.slot_duration)


class TestCaptureStream:
    def test_matches_run_scan(self):
        config = twenty_unit_config()
        plan = build_scan_plan(config, 1000.0)
        rng = np.random.default_rng(0)
        levels = {lab: float(rng.uniform(0, 3.3)) for lab in plan.channels}

        capture = capture_stream(plan, lambda lab, t: np.full_like(t, levels[lab]), 5)
        for i, frame in enumerate(capture.iter_frames()):
            direct = run_scan(plan, lambda lab, t: levels[lab],
                              scan_start=i / 1000.0, sequence=i)
            assert frame == direct

    def test_time_varying_channel(self):
        config = ReadoutConfig(chains=(ChainConfig(0, ("a",)),), adc_slot_budget=1e-6)
        plan = build_scan_plan(config, 1000.0)
        capture = capture_stream(plan, lambda lab, t: np.clip(t, 0, 3.3), 3)
        expected = quantize(capture.slot_times(0), 3.3, 12)
        assert np.array_equal(capture.counts[:, 0], expected)

    def test_determinism(self):
        config = twenty_unit_config()
        plan = build_scan_plan(config, 1000.0)

        def make_fn(seed):
            rng = np.random.default_rng(seed)
            return lambda lab, t: rng.uniform(0, 3.3, size=t.shape)

        a = capture_stream(plan, make_fn(11), 10)
        b = capture_stream(plan, make_fn(11), 10)
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.timestamps_us(), b.timestamps_us())


class TestConfigValidation:
    def test_duplicate_labels(self):
        with pytest.raises(ReadoutError):
            ReadoutConfig(chains=(ChainConfig(0, ("a",)), ChainConfig(1, ("a",))))

    def test_duplicate_chain_ids(self):
        with pytest.raises(ReadoutError):
            ReadoutConfig(chains=(ChainConfig(0, ("a",)), ChainConfig(0, ("b",))))

    def test_empty_chain(self):
        with pytest.raises(ReadoutError):
            ChainConfig(0, ())

    def test_bad_sample_phase(self):
        with pytest.raises(ReadoutError):
            ReadoutConfig(chains=(ChainConfig(0, ("a",)),), sample_phase=0.0)

    def test_bad_scan_rate(self):
        with pytest.raises(ReadoutError):
            build_scan_plan(twenty_unit_config(), -1.0)

    def test_unknown_selected_chain(self):
        with pytest.raises(ReadoutError):
            build_scan_plan(twenty_unit_config(), 100.0, selected_chains=[99])
