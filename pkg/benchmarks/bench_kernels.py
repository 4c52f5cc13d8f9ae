#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Both flavours are importable side by side, so one run prints the
comparison directly. The package-level switch is the WWSPOT_NO_NUMBA
environment variable, which forces the numpy path everywhere:

    python benchmarks/bench_kernels.py
    WWSPOT_NO_NUMBA=1 python -m wwspot.cli e2e-demo ...
"""

import argparse
import time

import numpy as np

from wwspot import _accel


def bench_levenshtein(impl, pairs):
    start = time.perf_counter()
    acc = 0
    for a, b in pairs:
        acc += impl(a, b)
    return time.perf_counter() - start, acc


def bench_image_source(impl, grids):
    start = time.perf_counter()
    acc = 0.0
    for xs, cx, ys, cy, zs, cz, mic, taps in grids:
        taps[:] = 0.0
        impl(xs, cx, ys, cy, zs, cz, mic, 0.7, 343.0, 16000.0, taps)
        acc += taps.sum()
    return time.perf_counter() - start, acc


def make_pairs(rng, count):
    pairs = []
    for _ in range(count):
        a = rng.integers(0, 40, int(rng.integers(4, 13))).astype(np.int64)
        b = rng.integers(0, 40, int(rng.integers(4, 13))).astype(np.int64)
        pairs.append((a, b))
    return pairs


def make_grids(rng, count):
    # order-10 sized axis grids (21 images per axis)
    grids = []
    for _ in range(count):
        xs = rng.uniform(-60, 60, 21)
        ys = rng.uniform(-50, 50, 21)
        zs = rng.uniform(-30, 30, 21)
        cx = rng.integers(0, 11, 21)
        cy = rng.integers(0, 11, 21)
        cz = rng.integers(0, 11, 21)
        mic = rng.uniform(0.5, 2.5, 3)
        taps = np.zeros(8000)
        grids.append((xs, cx, ys, cy, zs, cz, mic, taps))
    return grids


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=4000, help="edit-distance pairs")
    parser.add_argument("--grids", type=int, default=200, help="image grids")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    workloads = {
        "levenshtein": (bench_levenshtein, make_pairs(rng, args.pairs)),
        "image_source": (bench_image_source, make_grids(rng, args.grids)),
    }
    table = _accel.implementations()
    print(f"numba available: {_accel.NUMBA_ENABLED}")
    for kernel, (runner, payload) in workloads.items():
        times = {}
        checks = set()
        for flavour, impl in table[kernel].items():
            runner(impl, payload[: max(1, len(payload) // 20)])  # warmup / jit
            elapsed, check = runner(impl, payload)
            times[flavour] = elapsed
            checks.add(round(float(check), 6))
        assert len(checks) == 1, f"{kernel}: flavours disagree: {checks}"
        line = ", ".join(f"{name} {t * 1e3:8.2f} ms" for name, t in sorted(times.items()))
        print(f"{kernel:14s} {line}", end="")
        if "numba" in times and "numpy" in times:
            print(f"   (numpy/numba = {times['numpy'] / times['numba']:.1f}x)")
        else:
            print()


if __name__ == "__main__":
    main()
