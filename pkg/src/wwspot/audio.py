"""WAV I/O and clip-level power helpers.

Everything downstream works on mono float64 samples at 16 kHz. Readers
reject other sample rates outright; there is no resampler here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
WRITE_PEAK = 0.999
_FULL_SCALE = 32768.0


class AudioError(ValueError):
    """Unreadable, malformed, or out-of-contract audio."""


@dataclass
class AudioClip:
    """Mono PCM samples plus an opaque utterance id."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioError("clip samples must be one-dimensional")
        if self.samples.size == 0:
            raise AudioError("clip is empty")
        if self.sample_rate <= 0:
            raise AudioError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path: str | os.PathLike, id: str | None = None) -> AudioClip:
    """Read a PCM WAV file as a mono clip scaled to [-1, 1].

    Accepts 16-bit integer or 32/64-bit float encodings; multi-channel
    audio is averaged down to mono. Integer full scale maps to magnitude
    1.0 (32767 reads as 32767/32768).
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise AudioError(f"{path}: no such file")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise AudioError(f"{path}: not a readable PCM WAV ({exc})") from exc
    if data.size == 0:
        raise AudioError(f"{path}: zero-length audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _FULL_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(
            f"{path}: unsupported sample encoding {data.dtype}; "
            "expected 16-bit PCM or 32-bit float"
        )
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if rate != SAMPLE_RATE:
        raise AudioError(
            f"{path}: unsupported sample rate {rate} (expected {SAMPLE_RATE})"
        )
    if id is None:
        id = os.path.splitext(os.path.basename(path))[0]
    return AudioClip(samples, int(rate), id=id)


def write_wav(clip: AudioClip, path: str | os.PathLike) -> None:
    """Write a clip as 16-bit PCM mono.

    Clips whose peak exceeds 1.0 (augmentation sums can overshoot) are
    peak-normalized to 0.999 before quantization, so written samples
    always fit full scale.
    """
    samples = clip.samples
    peak = float(np.max(np.abs(samples)))
    if peak > 1.0:
        samples = samples * (WRITE_PEAK / peak)
    quantized = np.clip(
        np.round(samples * _FULL_SCALE), -32768, 32767
    ).astype(np.int16)
    try:
        wavfile.write(os.fspath(path), clip.sample_rate, quantized)
    except OSError as exc:
        raise AudioError(f"{path}: cannot write ({exc})") from exc


def rms_power(clip: AudioClip | np.ndarray) -> float:
    """Mean squared amplitude of a clip (zero only for all-zero input)."""
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip)
    if samples.size == 0:
        raise AudioError("cannot compute power of an empty clip")
    return float(np.mean(np.square(samples, dtype=np.float64)))
