"""Test-set evaluation of the tactile force and contact-location models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lstm.data import build_windows
from .lstm.models import ContactClassifier, ForceRegressor
from .scenarios import TactileSplits

CONTACT_FORCE_THRESHOLD_N = 0.05
TRANSITION_EXCLUSION = 10  # samples excluded on each side of a label change


@dataclass
class TactileEvalResult:
    times: np.ndarray
    force_true: np.ndarray
    force_est: np.ndarray
    class_true: np.ndarray
    class_est: np.ndarray
    rmse_all: float
    rmse_contact: float  # restricted to force > 0.05 N
    accuracy: float
    accuracy_excluding_transitions: float

    def summary_text(self) -> str:
        return (
            f"samples = {len(self.times)}\n"
            f"rmse_all_N = {self.rmse_all:.6f}\n"
            f"rmse_above_0.05N_N = {self.rmse_contact:.6f}\n"
            f"accuracy = {self.accuracy:.6f}\n"
            f"accuracy_excluding_transitions = {self.accuracy_excluding_transitions:.6f}\n"
        )


def _transition_mask(classes: np.ndarray, margin: int) -> np.ndarray:
    """True where a sample is at least `margin` samples from a label change."""
    keep = np.ones(len(classes), dtype=bool)
    changes = np.flatnonzero(np.diff(classes) != 0)
    for c in changes:
        keep[max(0, c - margin + 1) : c + margin + 1] = False
    return keep


def evaluate_tactile(
    splits: TactileSplits,
    force_model: ForceRegressor,
    contact_model: ContactClassifier,
) -> TactileEvalResult:
    """Aligned per-sample predictions over the test split.

    Rows start once both model windows are full, i.e. at sample index
    max(window lengths) - 1 within each test sequence.
    """
    offset = max(force_model.sequence_length, contact_model.sequence_length) - 1
    times, f_true, f_est, c_true, c_est = [], [], [], [], []
    for seq in splits.test:
        fw = build_windows([seq.segment("force")], force_model.sequence_length,
                           force_model.stats_)
        cw = build_windows([seq.segment("contact")], contact_model.sequence_length,
                           contact_model.stats_)
        f_pred = force_model.predict(fw.windows)
        c_pred = contact_model.predict(cw.windows)
        # windows of length L produce predictions starting at sample L-1
        f_pred = f_pred[offset - (force_model.sequence_length - 1) :]
        c_pred = c_pred[offset - (contact_model.sequence_length - 1) :]
        times.append(seq.times[offset:])
        f_true.append(seq.forces[offset:])
        c_true.append(seq.classes[offset:])
        f_est.append(f_pred)
        c_est.append(c_pred)
    times = np.concatenate(times)
    f_true = np.concatenate(f_true)
    f_est = np.concatenate(f_est)
    c_true = np.concatenate(c_true)
    c_est = np.concatenate(c_est)

    err = f_est - f_true
    rmse_all = float(np.sqrt(np.mean(err**2)))
    contact = f_true > CONTACT_FORCE_THRESHOLD_N
    rmse_contact = (
        float(np.sqrt(np.mean(err[contact] ** 2))) if np.any(contact) else float("nan")
    )
    accuracy = float(np.mean(c_est == c_true))
    keep = _transition_mask(c_true, TRANSITION_EXCLUSION)
    accuracy_excl = float(np.mean(c_est[keep] == c_true[keep])) if np.any(keep) else float("nan")
    return TactileEvalResult(
        times=times,
        force_true=f_true,
        force_est=f_est,
        class_true=c_true,
        class_est=c_est,
        rmse_all=rmse_all,
        rmse_contact=rmse_contact,
        accuracy=accuracy,
        accuracy_excluding_transitions=accuracy_excl,
    )
