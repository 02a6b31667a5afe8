"""Binary frame codec for streaming sample frames over a byte pipe.

Wire layout (little-endian payload fields, big-endian CRC):

    AA 55 | version u8 (=1) | sequence u16 | timestamp_us u32 |
    channel_count u8 | channel_count x sample u16 | crc16 u16 (BE)

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection,
no final xor) over the bytes from version through the last sample; the
sync bytes are excluded so resynchronization is payload-independent.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .readout import Capture, SampleFrame

SYNC = b"\xaa\x55"
VERSION = 1
HEADER_LEN = 10  # sync(2) + version(1) + sequence(2) + timestamp(4) + count(1)
CRC_LEN = 2


class ProtocolError(Exception):
    pass


class TooManyChannels(ProtocolError):
    pass


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE; check value for b'123456789' is 0x29B1."""
    return binascii.crc_hqx(data, 0xFFFF)


def frame_length(channel_count: int) -> int:
    return HEADER_LEN + 2 * channel_count + CRC_LEN


def encode_frame(frame: SampleFrame) -> bytes:
    """Serialize one frame; sequence wraps modulo 2^16, timestamp modulo 2^32."""
    n = len(frame.samples)
    if n > 255:
        raise TooManyChannels(f"{n} channels exceed the 255-channel frame limit")
    if any(not 0 <= s <= 0xFFFF for s in frame.samples):
        raise ProtocolError("samples must fit 16 bits")
    body = struct.pack(
        "<BHIB",
        VERSION,
        frame.sequence & 0xFFFF,
        frame.timestamp_us & 0xFFFFFFFF,
        n,
    ) + struct.pack(f"<{n}H", *frame.samples)
    return SYNC + body + struct.pack(">H", crc16(body))


def encode_capture(capture: Capture) -> bytes:
    """Fast path: serialize a whole capture without building frame objects."""
    out = bytearray()
    ts = capture.timestamps_us()
    counts = capture.counts
    n = counts.shape[1]
    if n > 255:
        raise TooManyChannels(f"{n} channels exceed the 255-channel frame limit")
    for i in range(counts.shape[0]):
        body = struct.pack("<BHIB", VERSION, i & 0xFFFF, int(ts[i]) & 0xFFFFFFFF, n)
        body += counts[i].astype("<u2").tobytes()
        out += SYNC + body + struct.pack(">H", crc16(body))
    return bytes(out)


@dataclass
class StreamDiagnostics:
    crc_failures: int = 0
    resyncs: int = 0
    dropped_bytes: int = 0
    truncated_frames: int = 0
    bad_versions: int = 0

    @property
    def clean(self) -> bool:
        return not (
            self.crc_failures
            or self.resyncs
            or self.dropped_bytes
            or self.truncated_frames
            or self.bad_versions
        )


class FrameParser:
    """Incremental frame parser tolerating arbitrary chunk boundaries.

    Scans for the sync pattern, validates CRCs, reassembles frames split
    across chunks, and resynchronizes after corruption.  All damage is
    reported through `diagnostics`; nothing raises on bad input.
    """

    def __init__(self):
        self._buf = bytearray()
        self.diagnostics = StreamDiagnostics()

    def feed(self, chunk: bytes) -> list[SampleFrame]:
        self._buf += chunk
        frames: list[SampleFrame] = []
        buf = self._buf
        pos = 0
        while True:
            idx = buf.find(SYNC, pos)
            if idx < 0:
                # keep a trailing 0xAA: it may be the start of a split sync
                keep = 1 if buf[-1:] == SYNC[:1] else 0
                self.diagnostics.dropped_bytes += len(buf) - pos - keep
                pos = len(buf) - keep
                break
            self.diagnostics.dropped_bytes += idx - pos
            pos = idx
            if len(buf) - pos < HEADER_LEN:
                break  # wait for the rest of the header
            count = buf[pos + 9]
            total = frame_length(count)
            if len(buf) - pos < total:
                break  # wait for the rest of the frame
            body = bytes(buf[pos + 2 : pos + total - CRC_LEN])
            (crc_rx,) = struct.unpack(">H", buf[pos + total - CRC_LEN : pos + total])
            if crc16(body) != crc_rx:
                self.diagnostics.crc_failures += 1
                self.diagnostics.resyncs += 1
                self.diagnostics.dropped_bytes += len(SYNC)
                pos += len(SYNC)  # rescan inside the corrupt frame
                continue
            version, sequence, timestamp_us, _ = struct.unpack("<BHIB", body[:8])
            if version != VERSION:
                self.diagnostics.bad_versions += 1
                self.diagnostics.resyncs += 1
                self.diagnostics.dropped_bytes += total
                pos += total
                continue
            samples = struct.unpack(f"<{count}H", body[8:])
            frames.append(
                SampleFrame(sequence=sequence, timestamp_us=timestamp_us, samples=samples)
            )
            pos += total
        del buf[:pos]
        return frames

    def finish(self) -> None:
        """Signal end of stream; any buffered partial frame counts as truncated."""
        if self._buf:
            if self._buf[:2] == SYNC:
                self.diagnostics.truncated_frames += 1
            self.diagnostics.dropped_bytes += len(self._buf)
            self._buf.clear()


def decode_stream(
    chunk: bytes, parser: Optional[FrameParser] = None
) -> tuple[list[SampleFrame], StreamDiagnostics, FrameParser]:
    """One-shot wrapper around FrameParser for chunk-at-a-time decoding."""
    if parser is None:
        parser = FrameParser()
    frames = parser.feed(chunk)
    return frames, parser.diagnostics, parser


@dataclass
class GapReport:
    gaps: list[tuple[int, int]] = field(default_factory=list)  # (after_sequence, length)

    @property
    def missing_frames(self) -> int:
        return sum(length for _, length in self.gaps)


def sequence_gap_check(frames: Iterable[SampleFrame]) -> GapReport:
    """Frame-loss accounting over the 16-bit sequence counter (wrap-aware)."""
    report = GapReport()
    prev: Optional[int] = None
    for f in frames:
        seq = f.sequence & 0xFFFF
        if prev is not None:
            gap = (seq - prev - 1) & 0xFFFF
            if gap:
                report.gaps.append((prev, gap))
        prev = seq
    return report
