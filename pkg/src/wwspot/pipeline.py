"""Glue between mined examples, audio, features, and training sets."""

from __future__ import annotations

import os

from .audio import read_wav
from .augment import ManifestRow
from .features import compute_lfbe
from .mining import POSITIVE, MinedExample, MiningError, make_frame_targets
from .model import FrameDataset


def dataset_from_examples(
    examples: list[MinedExample], wav_dir: str | os.PathLike
) -> FrameDataset:
    """Featurize each example's utterance (<utt_id>.wav under wav_dir)
    and derive its frame targets from the trigger span."""
    utts = []
    for ex in examples:
        clip = read_wav(os.path.join(os.fspath(wav_dir), f"{ex.utt_id}.wav"))
        lfbe = compute_lfbe(clip)
        targets = make_frame_targets(ex, lfbe.shape[0])
        utts.append((lfbe, targets, ex.polarity == POSITIVE))
    return FrameDataset.from_utterances(utts)


def dataset_from_manifest(
    rows: list[ManifestRow],
    by_source: dict[str, MinedExample],
    root: str | os.PathLike,
) -> FrameDataset:
    """Augmented utterances inherit targets from their source example;
    the convolution keeps lengths, so spans stay aligned."""
    utts = []
    for row in rows:
        ex = by_source.get(row.source_id)
        if ex is None:
            raise MiningError(
                f"{row.utt_id}: source {row.source_id!r} has no mined example; "
                "augment from the mined utterances only"
            )
        clip = read_wav(os.path.join(os.fspath(root), row.wav_path))
        lfbe = compute_lfbe(clip)
        targets = make_frame_targets(ex, lfbe.shape[0])
        utts.append((lfbe, targets, ex.polarity == POSITIVE))
    return FrameDataset.from_utterances(utts)
