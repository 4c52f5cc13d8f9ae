"""End-to-end demo: clean-only vs multi-condition training.

Generates the synthetic corpus, mines balanced examples from its
hypotheses, trains one model on clean audio and one on the
four-condition augmented mix built from the same clips, then scores both
on a held-out test set that is reverberated and corrupted. Everything is
driven by one integer seed and is bit-reproducible.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, read_wav
from .augment import (
    CorruptionSpec,
    MixRecipe,
    build_mixed_dataset,
    corrupt,
    reverberate,
    synthesize_rir,
    write_manifest,
)
from .decode import DecodeConfig, average_duration_frames, posterior_trace
from .evaluate import EvalResult, det_curve, det_svg, write_det_csv
from .features import compute_lfbe
from .lexicon import build_confusable_set, load_lexicon
from .mining import balance_examples, load_hypotheses, mine_examples
from .model import SpotterConfig, TrainConfig, train
from .pipeline import dataset_from_examples, dataset_from_manifest
from .synth import (
    WAKE_WORD,
    generate_utterances,
    make_music_pool,
    make_noise_pool,
    make_room_pool,
    write_corpus,
    write_lexicon_files,
)


@dataclass(frozen=True)
class DemoConfig:
    n_train: int = 500
    n_test: int = 200
    wake_fraction: float = 0.55
    test_snr_db: float = 10.0
    d_max: int = 2
    pos_threshold: float = 0.5
    neg_threshold: float = 0.5
    epochs: int = 10
    learning_rate: float = 0.4
    minibatch_size: int = 256
    bottleneck: int = 48
    hidden: int = 96
    mct_row: str = "200K"
    num_thresholds: int = 19
    jobs: int = 1


def _thresholds(count: int) -> np.ndarray:
    return np.round(np.linspace(0.95, 0.05, count), 6)


def frr_at_far(results: list[EvalResult], far_value: float) -> float:
    """FRR linearly interpolated at a FAR value on the curve's lower
    envelope (several thresholds can share one FAR; an operator would
    pick the best of them). Clamps outside the swept range."""
    envelope: dict[float, float] = {}
    for r in results:
        far = r.far_per_hour
        envelope[far] = min(envelope.get(far, 1.0), r.frr)
    pts = sorted(envelope.items())
    fars = np.array([p[0] for p in pts])
    frrs = np.array([p[1] for p in pts])
    return float(np.interp(far_value, fars, frrs))


def median_operating_far(*curves: list[EvalResult]) -> float:
    """Median of the positive FAR values across the given curves; the
    all-zero degenerate case falls back to the overall median."""
    fars = [r.far_per_hour for results in curves for r in results]
    positive = [f for f in fars if f > 0]
    return float(np.median(positive if positive else fars))


def run_demo(out_dir: str | os.PathLike, seed: int, cfg: DemoConfig = DemoConfig()) -> dict:
    """One clean-vs-multi-condition comparison; returns the summary dict
    (also written to summary.json next to the DET artifacts)."""
    t0 = time.monotonic()
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)

    # 1. corpus
    corpus_rng = np.random.default_rng([seed, 1])
    train_utts = generate_utterances("train", cfg.n_train, cfg.wake_fraction, corpus_rng)
    train_wav = os.path.join(out_dir, "train_wav")
    hyp_path = os.path.join(out_dir, "hypotheses.jsonl")
    write_corpus(train_utts, train_wav, hyp_path, corpus_rng)
    lex_path = os.path.join(out_dir, "lexicon.txt")
    freq_path = os.path.join(out_dir, "frequencies.txt")
    write_lexicon_files(lex_path, freq_path)

    # 2. held-out test set, reverberated and corrupted
    test_rng = np.random.default_rng([seed, 2])
    test_utts = generate_utterances("test", cfg.n_test, 0.5, test_rng)
    test_rooms = make_room_pool(8, test_rng)
    test_rirs = [
        synthesize_rir(room, id=f"test-rir-{i}") for i, room in enumerate(test_rooms)
    ]
    test_noises = make_noise_pool(6, 2.5, test_rng)
    test_musics = make_music_pool(4, 2.5, test_rng)
    test_spec = CorruptionSpec(cfg.test_snr_db, 0.0, 0.5, rng_seed=seed)
    test_clips: dict[str, AudioClip] = {}
    references: dict[str, list[tuple[int, int]]] = {}
    for utt in test_utts:
        rir = test_rirs[int(test_rng.integers(len(test_rirs)))]
        noise = test_noises[int(test_rng.integers(len(test_noises)))]
        music = test_musics[int(test_rng.integers(len(test_musics)))]
        clip = reverberate(utt.clip, rir)
        clip, _ = corrupt(clip, noise, music, test_spec, test_rng)
        test_clips[utt.utt_id] = clip
        references[utt.utt_id] = [
            (int(round(s * 100)), int(round(e * 100))) for s, e in utt.wake_spans()
        ]

    # 3. confusables and mining
    lexicon = load_lexicon(lex_path, freq_path)
    confusables = build_confusable_set(lexicon, WAKE_WORD, cfg.d_max)
    hyps, _ = load_hypotheses(hyp_path)
    mined = mine_examples(
        hyps, WAKE_WORD, confusables, cfg.pos_threshold, cfg.neg_threshold
    )
    balanced = balance_examples(mined, 1.0, rng_seed=seed)
    by_id = {ex.utt_id: ex for ex in balanced}

    # 4. clean training set
    clean_ds = dataset_from_examples(balanced, train_wav)

    # 5. multi-condition training set built from the same clips
    aug_rng = np.random.default_rng([seed, 3])
    mct_rooms = make_room_pool(12, aug_rng)
    mct_rirs = [
        synthesize_rir(room, id=f"mct-rir-{i}") for i, room in enumerate(mct_rooms)
    ]
    mct_noises = make_noise_pool(8, 2.5, aug_rng)
    mct_musics = make_music_pool(5, 2.5, aug_rng)
    clean_pool = [
        read_wav(os.path.join(train_wav, f"{ex.utt_id}.wav")) for ex in balanced
    ]
    recipe = MixRecipe.from_table_row(cfg.mct_row, scale=len(balanced) / 200000.0)
    mct_spec = CorruptionSpec(10.0, 3.0, 0.5, rng_seed=seed)
    mct_dir = os.path.join(out_dir, "mct")
    rows = build_mixed_dataset(
        clean_pool, mct_rirs, mct_noises, mct_musics, recipe, mct_spec, mct_dir,
        jobs=cfg.jobs,
    )
    write_manifest(rows, os.path.join(mct_dir, "manifest.tsv"))
    mct_ds = dataset_from_manifest(rows, by_id, mct_dir)

    # 6. train both models identically
    model_cfg = SpotterConfig(bottleneck=cfg.bottleneck, hidden=cfg.hidden)
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        minibatch_size=cfg.minibatch_size,
        epochs=cfg.epochs,
        rng_seed=seed,
    )
    clean_model, clean_log = train(clean_ds, train_cfg, model_cfg)
    mct_model, mct_log = train(mct_ds, train_cfg, model_cfg)

    # 7. decode the corrupted test set and sweep thresholds
    window = average_duration_frames(balanced)
    decode_cfg = DecodeConfig(smooth_window_frames=window, threshold=0.5)
    traces_clean = {}
    traces_mct = {}
    for utt_id, clip in test_clips.items():
        lfbe = compute_lfbe(clip)
        traces_clean[utt_id] = posterior_trace(clean_model, lfbe)
        traces_mct[utt_id] = posterior_trace(mct_model, lfbe)
    sweep = _thresholds(cfg.num_thresholds)
    curve_clean = det_curve(traces_clean, references, decode_cfg, sweep)
    curve_mct = det_curve(traces_mct, references, decode_cfg, sweep)

    write_det_csv(curve_clean, os.path.join(out_dir, "det_clean.csv"))
    write_det_csv(curve_mct, os.path.join(out_dir, "det_mct.csv"))
    det_svg(
        [("clean-only", curve_clean), ("multi-condition", curve_mct)],
        os.path.join(out_dir, "det_compare.svg"),
        title="clean-only vs multi-condition training",
    )

    operating_far = median_operating_far(curve_clean, curve_mct)
    frr_clean = frr_at_far(curve_clean, operating_far)
    frr_mct = frr_at_far(curve_mct, operating_far)
    summary = {
        "seed": seed,
        "mined_examples": len(balanced),
        "mct_counts": recipe.counts,
        "smooth_window_frames": window,
        "operating_far_per_hour": operating_far,
        "frr_clean": frr_clean,
        "frr_mct": frr_mct,
        "relative_frr_reduction": (frr_clean - frr_mct) / frr_clean if frr_clean else 0.0,
        "final_train_loss_clean": clean_log[-1] if clean_log else None,
        "final_train_loss_mct": mct_log[-1] if mct_log else None,
        "wall_seconds": round(time.monotonic() - t0, 2),
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def run_demo_suite(
    out_dir: str | os.PathLike, seeds: list[int], cfg: DemoConfig = DemoConfig()
) -> dict:
    """Run the demo once per seed and aggregate the comparison."""
    out_dir = os.fspath(out_dir)
    runs = []
    for seed in seeds:
        runs.append(run_demo(os.path.join(out_dir, f"seed-{seed}"), seed, cfg))
    mean_clean = float(np.mean([r["frr_clean"] for r in runs]))
    mean_mct = float(np.mean([r["frr_mct"] for r in runs]))
    suite = {
        "seeds": seeds,
        "runs": runs,
        "mean_frr_clean": mean_clean,
        "mean_frr_mct": mean_mct,
        "relative_frr_reduction": (mean_clean - mean_mct) / mean_clean
        if mean_clean
        else 0.0,
    }
    with open(os.path.join(out_dir, "suite_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(suite, fh, indent=2)
    return suite
