"""Numba-accelerated inner loops with pure-numpy fallbacks.

The two loop-heavy kernels in this package, phoneme edit distance and
image-source tap accumulation, come in a numba ``@njit`` flavour and a
vectorized numpy flavour. Setting ``WWSPOT_NO_NUMBA`` to a non-empty
value in the environment selects the numpy path; the same happens
silently when numba is not importable. ``benchmarks/bench_kernels.py``
times one against the other.
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_ENABLED = False
if not os.environ.get("WWSPOT_NO_NUMBA"):
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


# --- edit distance over integer-coded symbol sequences ----------------------


def _levenshtein_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """Unit-cost edit distance, one vectorized DP row per symbol of `a`.

    The in-row dependency cur[j] = min(base[j], cur[j-1] + 1) is resolved
    as a running minimum of base[j] - j.
    """
    n = b.size
    idx = np.arange(n + 1, dtype=np.int64)
    prev = idx.copy()
    scratch = np.empty(n + 1, dtype=np.int64)
    for i in range(1, a.size + 1):
        base = np.minimum(prev[1:] + 1, prev[:-1] + (b != a[i - 1]))
        scratch[0] = i
        np.subtract(base, idx[1:], out=scratch[1:])
        np.minimum.accumulate(scratch, out=scratch)
        scratch += idx
        prev, scratch = scratch, prev
    return int(prev[n])


def _levenshtein_loops(a: np.ndarray, b: np.ndarray) -> int:
    m = a.size
    n = b.size
    prev = np.arange(n + 1, dtype=np.int64)
    cur = np.empty(n + 1, dtype=np.int64)
    for i in range(1, m + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, n + 1):
            d = prev[j - 1] + (0 if b[j - 1] == ai else 1)
            if prev[j] + 1 < d:
                d = prev[j] + 1
            if cur[j - 1] + 1 < d:
                d = cur[j - 1] + 1
            cur[j] = d
        prev, cur = cur, prev
    return int(prev[n])


# --- image-source tap accumulation ------------------------------------------
#
# Inputs are the per-axis image coordinates and per-axis reflection counts;
# each (ix, iy, iz) combination is one image source contributing
# beta**reflections / (4*pi*d) at sample delay floor(d*rate/speed + 0.5).
# Images closer than 1e-9 m to the microphone are skipped (the amplitude
# would be unbounded). `taps` must be long enough for the largest delay.


def _image_taps_numpy(
    xs: np.ndarray,
    cx: np.ndarray,
    ys: np.ndarray,
    cy: np.ndarray,
    zs: np.ndarray,
    cz: np.ndarray,
    mic: np.ndarray,
    beta: float,
    speed: float,
    rate: float,
    taps: np.ndarray,
) -> np.ndarray:
    dx2 = (xs - mic[0]) ** 2
    dy2 = (ys - mic[1]) ** 2
    dz2 = (zs - mic[2]) ** 2
    dist = np.sqrt(
        dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
    ).ravel()
    counts = (
        cx[:, None, None] + cy[None, :, None] + cz[None, None, :]
    ).ravel()
    keep = dist > 1e-9
    dist = dist[keep]
    counts = counts[keep]
    amps = np.power(beta, counts) / (4.0 * np.pi * dist)
    delays = (dist * rate / speed + 0.5).astype(np.int64)
    np.add.at(taps, delays, amps)
    return taps


def _image_taps_loops(
    xs: np.ndarray,
    cx: np.ndarray,
    ys: np.ndarray,
    cy: np.ndarray,
    zs: np.ndarray,
    cz: np.ndarray,
    mic: np.ndarray,
    beta: float,
    speed: float,
    rate: float,
    taps: np.ndarray,
) -> np.ndarray:
    for i in range(xs.size):
        dx2 = (xs[i] - mic[0]) ** 2
        for j in range(ys.size):
            dy2 = (ys[j] - mic[1]) ** 2
            for k in range(zs.size):
                dz2 = (zs[k] - mic[2]) ** 2
                d = math.sqrt(dx2 + dy2 + dz2)
                if d <= 1e-9:
                    continue
                n = cx[i] + cy[j] + cz[k]
                amp = beta**n / (4.0 * math.pi * d)
                taps[int(d * rate / speed + 0.5)] += amp
    return taps


if NUMBA_ENABLED:
    _levenshtein_jit = njit(cache=True)(_levenshtein_loops)
    _image_taps_jit = njit(cache=True)(_image_taps_loops)
    levenshtein_codes = _levenshtein_jit
    image_source_taps = _image_taps_jit
else:
    levenshtein_codes = _levenshtein_numpy
    image_source_taps = _image_taps_numpy


def implementations() -> dict[str, dict[str, object]]:
    """All available flavours per kernel, for tests and the benchmark."""
    table: dict[str, dict[str, object]] = {
        "levenshtein": {"numpy": _levenshtein_numpy},
        "image_source": {"numpy": _image_taps_numpy},
    }
    if NUMBA_ENABLED:
        table["levenshtein"]["numba"] = _levenshtein_jit
        table["image_source"]["numba"] = _image_taps_jit
    return table
