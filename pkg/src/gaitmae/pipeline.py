"""Plumbing from raw landmark trials to model-ready streams.

Each step is a thin composition of the dedicated modules: gap filling and
grounding, pelvis-frame normalization, angle extraction, tokenization, and
cycle segmentation. Cycle boundaries are always detected on the original
(gap-filled) heel track, so an anomalous or corrected angle stream is cut at
the same frames as the stream it is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import TokenWindow, make_windows, stack_windows
from .gaitcycle import CycleBoundaries, detect_cycles, normalized_cycles
from .skeleton import (
    LM,
    SkeletonTopology,
    Trial,
    estimate_segment_lengths,
    extract_angle_sequence,
    interpolate_missing,
    pelvis_normalize,
)
from .stats import select_analyzed


@dataclass
class ProcessedTrial:
    """A trial after gap filling, grounding, and angle extraction."""

    subject_id: str
    condition: str
    fps: float
    topo: SkeletonTopology
    positions: np.ndarray  # (N, 19, 3) gap-filled world landmarks
    angles: np.ndarray     # (N, 12, 3) pelvis-frame joint angles
    gimbal: np.ndarray     # (N, 12) per-joint gimbal flags
    source: dict | None = None

    @property
    def n_frames(self) -> int:
        return self.angles.shape[0]


def preprocess_trial(trial: Trial, topo: SkeletonTopology | None = None) -> ProcessedTrial:
    """Raw trial -> joint angles (estimating bone lengths unless given)."""
    topo = topo or estimate_segment_lengths(trial)
    filled = interpolate_missing(trial, topo)
    normalized = pelvis_normalize(filled.positions)
    angles, gimbal = extract_angle_sequence(normalized, topo)
    return ProcessedTrial(
        subject_id=trial.subject_id,
        condition=trial.condition,
        fps=trial.fps,
        topo=topo,
        positions=filled.positions,
        angles=angles,
        gimbal=gimbal,
        source=trial.source,
    )


def trial_windows(processed: ProcessedTrial, stride: int = 1) -> list[TokenWindow]:
    return make_windows(processed.angles, stride=stride)


def training_arrays(processed_trials, stride: int = 1):
    """Stack every trial's windows into one (N, 12, 7, 12)/(N, 12, 7, 3) pair."""
    windows = []
    for p in processed_trials:
        windows.extend(trial_windows(p, stride=stride))
    if not windows:
        raise DataError("no training windows produced")
    return stack_windows(windows)


def segment(processed: ProcessedTrial) -> CycleBoundaries:
    """Gait cycles from the left heel height of the gap-filled positions."""
    return detect_cycles(processed.positions[:, LM["l_heel"], 2], processed.fps)


def analyzed_cycle_curves(
    angle_seq: np.ndarray, boundaries: CycleBoundaries
) -> np.ndarray:
    """Phase-normalized analysis channels: (n_cycles, 100, 4)."""
    cycles = normalized_cycles(np.asarray(angle_seq, dtype=float), boundaries)
    return select_analyzed(cycles)
