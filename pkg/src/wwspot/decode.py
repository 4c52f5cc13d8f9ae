"""Posterior smoothing and thresholded peak detection.

The wake-word posterior trace is smoothed by a moving average whose
width should match the typical wake-word duration, then maximal
supra-threshold regions (merged across short gaps) become detections
carrying their peak frame and score.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .features import LEFT_CONTEXT, RIGHT_CONTEXT, stack_context
from .mining import FRAME_HOP_S, MinedExample, POSITIVE
from .model import SpotterModel, posteriors


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    smooth_window_frames: int = 50
    threshold: float = 0.5
    min_gap_frames: int = 30

    def __post_init__(self):
        if self.smooth_window_frames < 1:
            raise DecodeError("smooth_window_frames must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise DecodeError("threshold must be in (0, 1)")
        if self.min_gap_frames < 0:
            raise DecodeError("min_gap_frames must be >= 0")


@dataclass(frozen=True)
class Detection:
    utt_id: str
    start_frame: int
    end_frame: int  # inclusive
    peak_frame: int
    peak_score: float


def smooth(trace: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with edge shrinking.

    Boundary windows are truncated and divided by the actual sample
    count, so constant traces stay constant all the way to the edges.
    """
    if window < 1:
        raise DecodeError("window must be >= 1")
    trace = np.asarray(trace, dtype=np.float64)
    if trace.ndim != 1 or trace.size == 0:
        raise DecodeError("trace must be a non-empty vector")
    ones = np.ones(window)
    sums = np.convolve(trace, ones, mode="same")
    counts = np.convolve(np.ones(trace.size), ones, mode="same")
    return sums / counts


def detect_peaks(
    trace: np.ndarray, cfg: DecodeConfig, utt_id: str = ""
) -> list[Detection]:
    """Maximal regions with score >= threshold, merged across gaps
    shorter than min_gap_frames; the peak is the earliest argmax.

    Merging can consolidate neighbouring events, so detection counts are
    only guaranteed monotone across a threshold sweep while regions stay
    separated by at least the merge gap.
    """
    trace = np.asarray(trace, dtype=np.float64)
    above = np.flatnonzero(trace >= cfg.threshold)
    if above.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(above) > 1)
    starts = above[np.concatenate(([0], breaks + 1))]
    ends = above[np.concatenate((breaks, [above.size - 1]))]
    merged: list[list[int]] = [[int(starts[0]), int(ends[0])]]
    for s, e in zip(starts[1:], ends[1:]):
        if s - merged[-1][1] - 1 < cfg.min_gap_frames:
            merged[-1][1] = int(e)
        else:
            merged.append([int(s), int(e)])
    detections = []
    for s, e in merged:
        peak = s + int(np.argmax(trace[s : e + 1]))
        detections.append(Detection(utt_id, s, e, peak, float(trace[peak])))
    return detections


def average_duration_frames(examples: list[MinedExample]) -> int:
    """Mean trigger duration of the positive examples, in frames; the
    natural smoothing-window width for decoding."""
    spans = [
        e.trigger_span[1] - e.trigger_span[0]
        for e in examples
        if e.polarity == POSITIVE
    ]
    if not spans:
        raise DecodeError("no positive examples to measure")
    return max(1, int(round(float(np.mean(spans)) / FRAME_HOP_S)))


def posterior_trace(
    model: SpotterModel,
    lfbe: np.ndarray,
    left: int = LEFT_CONTEXT,
    right: int = RIGHT_CONTEXT,
) -> np.ndarray:
    """Per-frame wake-word posterior for one utterance's LFBE matrix."""
    stacked = stack_context(lfbe, left, right)
    return posteriors(model, stacked)[:, 1]


def write_detections(detections: list[Detection], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in detections:
            fh.write(
                f"{d.utt_id}\t{d.start_frame}\t{d.end_frame}\t"
                f"{d.peak_frame}\t{d.peak_score:.6f}\n"
            )


def read_detections(path: str | os.PathLike) -> list[Detection]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise DecodeError(f"{path}:{lineno}: malformed detection row")
            out.append(
                Detection(
                    parts[0], int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])
                )
            )
    return out
