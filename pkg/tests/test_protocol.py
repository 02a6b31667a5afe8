"""Unit tests for the wire-frame codec and incremental parser."""

import struct

import numpy as np
import pytest

from shiftscan.protocol import (
    SYNC,
    FrameParser,
    ProtocolError,
    TooManyChannels,
    crc16,
    decode_stream,
    encode_capture,
    encode_frame,
    frame_length,
    sequence_gap_check,
)
from shiftscan.readout import SampleFrame


def crc16_bitwise(data: bytes) -> int:
    """Independent bit-by-bit CRC-16/CCITT-FALSE for cross-checking."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


def random_frame(rng) -> SampleFrame:
    n = int(rng.integers(0, 25))
    return SampleFrame(
        sequence=int(rng.integers(0, 1 << 16)),
        timestamp_us=int(rng.integers(0, 1 << 32)),
        samples=tuple(int(v) for v in rng.integers(0, 1 << 16, size=n)),
    )


class TestCrc:
    def test_check_value(self):
        assert crc16(b"123456789") == 0x29B1

    def test_matches_bitwise_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            data = bytes(rng.integers(0, 256, size=int(rng.integers(0, 64)), dtype=np.uint8))
            assert crc16(data) == crc16_bitwise(data)


class TestEncodeFrame:
    def test_empty_frame_layout(self):
        wire = encode_frame(SampleFrame(sequence=0, timestamp_us=0, samples=()))
        body = bytes.fromhex("01 00 00 00 00 00 00 00".replace(" ", ""))
        assert wire == SYNC + body + struct.pack(">H", crc16_bitwise(body))

    def test_sample_endianness(self):
        wire = encode_frame(SampleFrame(sequence=0, timestamp_us=0, samples=(0x0123,)))
        assert wire[10:12] == b"\x23\x01"

    def test_frame_length(self):
        for n in (0, 1, 20, 255):
            frame = SampleFrame(sequence=0, timestamp_us=0, samples=(0,) * n)
            assert len(encode_frame(frame)) == frame_length(n) == 12 + 2 * n

    def test_too_many_channels(self):
        with pytest.raises(TooManyChannels):
            encode_frame(SampleFrame(sequence=0, timestamp_us=0, samples=(0,) * 256))

    def test_oversized_sample(self):
        with pytest.raises(ProtocolError):
            encode_frame(SampleFrame(sequence=0, timestamp_us=0, samples=(70000,)))

    def test_sequence_and_timestamp_wrap(self):
        wire = encode_frame(
            SampleFrame(sequence=0x1_0005, timestamp_us=0x1_0000_0007, samples=())
        )
        (seq,) = struct.unpack("<H", wire[3:5])
        (ts,) = struct.unpack("<I", wire[5:9])
        assert seq == 5 and ts == 7


class TestRoundTrip:
    def test_single_frame_byte_by_byte(self):
        frame = SampleFrame(sequence=3, timestamp_us=1234, samples=(0, 4095, 17))
        parser = FrameParser()
        out = []
        for b in encode_frame(frame):
            out += parser.feed(bytes([b]))
        parser.finish()
        assert out == [frame]
        assert parser.diagnostics.clean

    def test_random_frames_random_chunking(self):
        rng = np.random.default_rng(1)
        frames = [random_frame(rng) for _ in range(500)]
        blob = b"".join(encode_frame(f) for f in frames)
        parser = FrameParser()
        out = []
        pos = 0
        while pos < len(blob):
            step = int(rng.integers(1, 40))
            out += parser.feed(blob[pos : pos + step])
            pos += step
        parser.finish()
        assert out == frames
        assert parser.diagnostics.clean

    def test_chunking_invariance(self):
        rng = np.random.default_rng(2)
        frames = [random_frame(rng) for _ in range(50)]
        blob = b"".join(encode_frame(f) for f in frames)
        whole = FrameParser()
        ref = whole.feed(blob)
        for trial in range(5):
            split_rng = np.random.default_rng(100 + trial)
            parser = FrameParser()
            out = []
            pos = 0
            while pos < len(blob):
                step = int(split_rng.integers(1, 64))
                out += parser.feed(blob[pos : pos + step])
                pos += step
            assert out == ref

    def test_encode_capture_matches_per_frame(self):
        from shiftscan.readout import ChainConfig, ReadoutConfig, build_scan_plan, capture_stream

        config = ReadoutConfig(chains=(ChainConfig(0, ("a", "b", "c")),))
        plan = build_scan_plan(config, 100.0)
        capture = capture_stream(plan, lambda lab, t: np.full_like(t, 1.0), 7)
        assert encode_capture(capture) == b"".join(
            encode_frame(f) for f in capture.iter_frames()
        )


class TestCorruption:
    def test_single_bit_flips_all_detected(self):
        frame = SampleFrame(sequence=9, timestamp_us=55, samples=tuple(range(20)))
        wire = bytearray(encode_frame(frame))
        for byte_idx in range(2, len(wire)):  # skip the sync bytes
            for bit in range(8):
                corrupted = bytearray(wire)
                corrupted[byte_idx] ^= 1 << bit
                parser = FrameParser()
                out = parser.feed(bytes(corrupted))
                parser.finish()
                assert frame not in out

    def test_crc_failure_diagnostic(self):
        frame = SampleFrame(sequence=0, timestamp_us=0, samples=(1, 2))
        wire = bytearray(encode_frame(frame))
        wire[11] ^= 0x01
        parser = FrameParser()
        out = parser.feed(bytes(wire))
        parser.finish()
        assert out == []
        assert parser.diagnostics.crc_failures == 1

    def test_resync_after_garbage(self):
        frame = SampleFrame(sequence=1, timestamp_us=2, samples=(3,))
        garbage = b"\x00\x13\x37\xaa\x00"
        parser = FrameParser()
        out = parser.feed(garbage + encode_frame(frame))
        parser.finish()
        assert out == [frame]
        assert parser.diagnostics.dropped_bytes == len(garbage)

    def test_corrupt_middle_frame_recovers_rest(self):
        rng = np.random.default_rng(5)
        frames = [random_frame(rng) for _ in range(10)]
        blobs = [bytearray(encode_frame(f)) for f in frames]
        blobs[4][6] ^= 0xFF
        parser = FrameParser()
        out = parser.feed(b"".join(bytes(b) for b in blobs))
        parser.finish()
        assert out == frames[:4] + frames[5:]
        assert parser.diagnostics.crc_failures >= 1

    def test_truncated_final_frame(self):
        frame = SampleFrame(sequence=0, timestamp_us=0, samples=(1, 2, 3))
        wire = encode_frame(frame)
        parser = FrameParser()
        out = parser.feed(wire[:-4])
        parser.finish()
        assert out == []
        assert parser.diagnostics.truncated_frames == 1

    def test_decode_stream_wrapper(self):
        frame = SampleFrame(sequence=0, timestamp_us=0, samples=())
        frames, diag, parser = decode_stream(encode_frame(frame))
        assert frames == [frame]
        assert diag.clean


class TestSequenceGaps:
    def _frames(self, seqs):
        return [SampleFrame(sequence=s, timestamp_us=0, samples=()) for s in seqs]

    def test_no_gaps(self):
        assert sequence_gap_check(self._frames([0, 1, 2])).missing_frames == 0

    def test_one_gap(self):
        report = sequence_gap_check(self._frames([0, 2]))
        assert report.gaps == [(0, 1)]

    def test_wraparound(self):
        assert sequence_gap_check(self._frames([65535, 0])).missing_frames == 0

    def test_gap_across_wrap(self):
        report = sequence_gap_check(self._frames([65534, 1]))
        assert report.missing_frames == 2
