"""Sliding-window dataset construction with per-channel standardization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class TooShort(Exception):
    pass


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray  # (n_features,)
    std: np.ndarray  # (n_features,)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


@dataclass
class Segment:
    """One contiguous labeled stream; windows never span segment boundaries."""

    values: np.ndarray  # (n, n_features) volts
    targets: np.ndarray  # (n,) force in newtons or integer class labels

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.targets = np.asarray(self.targets)
        if self.values.ndim != 2 or len(self.values) != len(self.targets):
            raise ValueError("segment values and targets must align")


@dataclass
class WindowDataset:
    windows: np.ndarray  # (n_windows, sequence_length, n_features), normalized
    targets: np.ndarray  # (n_windows,)
    stats: NormalizationStats


def compute_stats(segments: Sequence[Segment]) -> NormalizationStats:
    """Per-channel mean/std pooled over all training samples."""
    values = np.concatenate([s.values for s in segments], axis=0)
    std = values.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return NormalizationStats(mean=values.mean(axis=0), std=std)


def build_windows(
    segments: Sequence[Segment],
    sequence_length: int,
    stats: Optional[NormalizationStats] = None,
) -> WindowDataset:
    """Stride-1 sliding windows; the target is the label at the final sample.

    When stats is None the normalization is computed from these segments
    (training split); otherwise the given training statistics are applied.
    """
    if not segments:
        raise TooShort("at least one segment is required")
    for s in segments:
        if len(s.values) < sequence_length:
            raise TooShort(
                f"segment of length {len(s.values)} is shorter than the "
                f"window length {sequence_length}"
            )
    if stats is None:
        stats = compute_stats(segments)
    windows = []
    targets = []
    for s in segments:
        norm = stats.apply(s.values)
        view = np.lib.stride_tricks.sliding_window_view(norm, sequence_length, axis=0)
        windows.append(np.ascontiguousarray(view.transpose(0, 2, 1)))
        targets.append(s.targets[sequence_length - 1 :])
    return WindowDataset(
        windows=np.concatenate(windows, axis=0),
        targets=np.concatenate(targets, axis=0),
        stats=stats,
    )
