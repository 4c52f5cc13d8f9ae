"""Command-line entry point wiring the pipeline stages.

Every subcommand reads the shared sectioned config (overridable with
repeated --set section.key=value flags) and writes its artifacts into a
run directory named after the configuration hash, so identical runs are
re-runnable and land on identical bytes.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import augment as aug
from . import decode as dec
from . import demo as demo_mod
from . import evaluate as ev
from . import lexicon as lex
from . import mining
from .audio import AudioError, read_wav
from .config import ConfigError, PipelineConfig, load_config
from .features import FeatureError, compute_lfbe, stack_context, write_features
from .model import (
    ModelError,
    SpotterConfig,
    TrainConfig,
    TrainingDiverged,
    load_model,
    save_model,
    train,
)
from .pipeline import dataset_from_examples, dataset_from_manifest
from .synth import make_room_pool

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class DataError(Exception):
    pass


def _run_dir(args, cfg: PipelineConfig, name: str) -> str:
    suffix = f"-{time.strftime('%Y%m%d-%H%M%S')}" if args.timestamp else ""
    path = os.path.join(args.out, f"{name}-{cfg.hash8()}{suffix}")
    os.makedirs(path, exist_ok=True)
    return path


def _list_wavs(wav_dir: str) -> list[str]:
    if not os.path.isdir(wav_dir):
        raise DataError(f"{wav_dir}: not a directory")
    return sorted(glob.glob(os.path.join(wav_dir, "*.wav")))


def _load_clips(wav_dir: str):
    paths = _list_wavs(wav_dir)
    if not paths:
        raise DataError(f"{wav_dir}: no wav files")
    return [read_wav(p) for p in paths]


def _read_references(path: str) -> dict[str, list[tuple[int, int]]]:
    refs: dict[str, list[tuple[int, int]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected utt_id<TAB>start<TAB>end")
            refs.setdefault(parts[0], []).append((int(parts[1]), int(parts[2])))
    return refs


def _read_utt_frames(path: str) -> dict[str, int]:
    frames: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected utt_id<TAB>frames")
            if parts[0] in frames:
                raise DataError(f"{path}:{lineno}: duplicate utt_id {parts[0]!r}")
            frames[parts[0]] = int(parts[1])
    return frames


# --- subcommands ---------------------------------------------------------------


def cmd_rir_gen(args, cfg: PipelineConfig) -> int:
    count = cfg.getint("rir", "count", lo=1)
    max_order = cfg.getint("rir", "max_order", lo=0, hi=10)
    beta_min = cfg.getfloat("rir", "beta_min", lo=0.0, hi=1.0)
    beta_max = cfg.getfloat("rir", "beta_max", lo=beta_min, hi=1.0)
    seed = args.seed if args.seed is not None else cfg.getint("run", "seed")
    out = _run_dir(args, cfg, "rir-gen")
    rng = np.random.default_rng(seed)
    rooms = make_room_pool(count, rng, max_order=max_order)
    rows = []
    for i, room in enumerate(rooms):
        beta = float(rng.uniform(beta_min, beta_max))
        room = aug.RoomSpec(
            room.dimensions, room.source_pos, room.mic_pos, beta, max_order
        )
        rir = aug.synthesize_rir(room, id=f"rir-{i:04d}")
        path = os.path.join(out, f"{rir.id}.wav")
        aug.rir_to_wav(rir, path)
        rows.append(f"{rir.id}\t{path}")
    with open(os.path.join(out, "rirs.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    print(out)
    return EXIT_OK


def cmd_augment(args, cfg: PipelineConfig) -> int:
    try:
        recipe = aug.MixRecipe.from_table_row(
            cfg.getstr("augment", "table_row"),
            cfg.getfloat("augment", "recipe_scale", lo=0.0),
        )
        spec = aug.CorruptionSpec(
            cfg.getfloat("augment", "snr_mean_db"),
            cfg.getfloat("augment", "snr_std_db", lo=0.0),
            cfg.getfloat("augment", "noise_music_split", lo=0.0, hi=1.0),
            rng_seed=args.seed if args.seed is not None else cfg.getint("run", "seed"),
        )
    except aug.AugmentError as exc:
        raise ConfigError(f"augment: {exc}") from exc
    clean = _load_clips(args.clean_dir)
    if args.mined:
        # keep only utterances with mined examples, so the augmented set
        # inherits frame targets cleanly at training time
        wanted = {e.utt_id for e in mining.read_mined(args.mined)}
        clean = [c for c in clean if c.id in wanted]
        if not clean:
            raise DataError(f"{args.clean_dir}: no wav matches the mined utterances")
    rirs = (
        [aug.rir_from_wav(p) for p in _list_wavs(args.rir_dir)] if args.rir_dir else []
    )
    noises = _load_clips(args.noise_dir) if args.noise_dir else []
    musics = _load_clips(args.music_dir) if args.music_dir else []
    out = _run_dir(args, cfg, "augment")
    try:
        rows = aug.build_mixed_dataset(
            clean, rirs, noises, musics, recipe, spec, out, jobs=args.jobs
        )
    except aug.AugmentError as exc:
        raise DataError(str(exc)) from exc
    aug.write_manifest(rows, os.path.join(out, "manifest.tsv"))
    print(os.path.join(out, "manifest.tsv"))
    return EXIT_OK


def cmd_confusables(args, cfg: PipelineConfig) -> int:
    wake = args.wake_word or cfg.getstr("lexicon", "wake_word")
    if not wake:
        raise ConfigError("lexicon.wake_word: missing wake word")
    d_max = cfg.getint("lexicon", "d_max", lo=0)
    top_n = cfg.getint("lexicon", "top_n_frequent", lo=1)
    lexicon = lex.load_lexicon(args.lexicon, args.frequencies)
    confusables = lex.build_confusable_set(lexicon, wake, d_max, top_n)
    out = _run_dir(args, cfg, "confusables")
    path = os.path.join(out, "confusables.tsv")
    lex.write_confusables(confusables, path)
    print(path)
    return EXIT_OK


def cmd_mine(args, cfg: PipelineConfig) -> int:
    pos_th = cfg.getfloat("mining", "pos_threshold", lo=0.0, hi=1.0)
    neg_th = cfg.getfloat("mining", "neg_threshold", lo=0.0, hi=1.0)
    ratio = cfg.getfloat("mining", "target_ratio", lo=1e-9)
    wake = args.wake_word or cfg.getstr("lexicon", "wake_word")
    if not wake:
        raise ConfigError("lexicon.wake_word: missing wake word")
    seed = args.seed if args.seed is not None else cfg.getint("run", "seed")
    confusables = lex.read_confusables(args.confusables, wake)
    hyps, skipped = mining.load_hypotheses(args.hypotheses)
    if not hyps:
        raise DataError(f"{args.hypotheses}: no usable hypotheses")
    examples = mining.mine_examples(hyps, wake, confusables, pos_th, neg_th)
    if args.balance:
        examples = mining.balance_examples(examples, ratio, rng_seed=seed)
    out = _run_dir(args, cfg, "mine")
    path = os.path.join(out, "mined.tsv")
    mining.write_mined(examples, path)
    n_pos = sum(1 for e in examples if e.polarity == mining.POSITIVE)
    print(f"{path}\t{n_pos} positive\t{len(examples) - n_pos} negative\t{skipped} skipped")
    return EXIT_OK


def _parallel_map(fn, items, jobs, initializer=None, initargs=()):
    """Per-utterance worker pool; jobs=1 stays in-process. Results come
    back in input order, so outputs are byte-identical for any N."""
    if jobs <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(item) for item in items]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=initializer, initargs=initargs
    ) as pool:
        return list(pool.map(fn, items, chunksize=8))


def _featurize_one(job):
    # dumps the stacked 620-dimensional network inputs, one row per frame
    path, out = job
    clip = read_wav(path)
    stacked = stack_context(compute_lfbe(clip))
    write_features(stacked, os.path.join(out, f"{clip.id}.feat"))
    return clip.id


def cmd_featurize(args, cfg: PipelineConfig) -> int:
    paths = _list_wavs(args.wav_dir)
    if not paths:
        raise DataError(f"{args.wav_dir}: no wav files")
    out = _run_dir(args, cfg, "featurize")
    _parallel_map(_featurize_one, [(p, out) for p in paths], args.jobs)
    print(out)
    return EXIT_OK


def cmd_train(args, cfg: PipelineConfig) -> int:
    train_cfg = TrainConfig(
        learning_rate=cfg.getfloat("training", "learning_rate", lo=1e-12),
        minibatch_size=cfg.getint("training", "minibatch_size", lo=1),
        epochs=cfg.getint("training", "epochs", lo=0),
        rng_seed=args.seed if args.seed is not None else cfg.getint("run", "seed"),
        l2_coefficient=cfg.getfloat("training", "l2_coefficient", lo=0.0),
    )
    model_cfg = SpotterConfig(
        bottleneck=cfg.getint("training", "bottleneck", lo=1),
        hidden=cfg.getint("training", "hidden", lo=1),
    )
    mode = cfg.getstr("training", "checkpoint_mode")
    if mode not in ("text", "f32"):
        raise ConfigError(f"training.checkpoint_mode: {mode!r} is not text|f32")
    examples = mining.read_mined(args.mined)
    if not examples:
        raise DataError(f"{args.mined}: no mined examples")
    if args.augment_manifest:
        rows = aug.read_manifest(args.augment_manifest)
        by_id = {e.utt_id: e for e in examples}
        dataset = dataset_from_manifest(
            rows, by_id, args.augment_root or os.path.dirname(args.augment_manifest)
        )
    else:
        dataset = dataset_from_examples(examples, args.audio_dir)
    model, log = train(dataset, train_cfg, model_cfg)
    out = _run_dir(args, cfg, "train")
    ckpt = os.path.join(out, "model.ckpt")
    save_model(model, ckpt, mode=mode)
    with open(os.path.join(out, "train_log.txt"), "w", encoding="ascii") as fh:
        for epoch, loss in enumerate(log, 1):
            fh.write(f"{epoch}\t{loss:.6f}\n")
    print(ckpt)
    return EXIT_OK


_WORKER_MODEL = None


def _init_decode_worker(model_path):
    global _WORKER_MODEL
    _WORKER_MODEL = load_model(model_path, expected_classes=2)


def _decode_one(path):
    clip = read_wav(path)
    return clip.id, dec.posterior_trace(_WORKER_MODEL, compute_lfbe(clip))


def _decode_traces(args):
    paths = _list_wavs(args.wav_dir)
    if not paths:
        raise DataError("no evaluation inputs")
    load_model(args.model, expected_classes=2)  # validate before forking
    pairs = _parallel_map(
        _decode_one, paths, args.jobs, initializer=_init_decode_worker,
        initargs=(args.model,),
    )
    return dict(pairs)


def cmd_decode(args, cfg: PipelineConfig) -> int:
    decode_cfg = dec.DecodeConfig(
        cfg.getint("decoding", "smooth_window_frames", lo=1),
        cfg.getfloat("decoding", "threshold", lo=1e-9, hi=1 - 1e-9),
        cfg.getint("decoding", "min_gap_frames", lo=0),
    )
    traces = _decode_traces(args)
    out = _run_dir(args, cfg, "decode")
    detections = []
    frames_rows = []
    for utt_id in sorted(traces):
        smoothed = dec.smooth(traces[utt_id], decode_cfg.smooth_window_frames)
        detections.extend(dec.detect_peaks(smoothed, decode_cfg, utt_id))
        frames_rows.append(f"{utt_id}\t{len(traces[utt_id])}")
    dec.write_detections(detections, os.path.join(out, "detections.tsv"))
    with open(os.path.join(out, "utt_frames.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(frames_rows) + "\n")
    print(os.path.join(out, "detections.tsv"))
    return EXIT_OK


def cmd_eval(args, cfg: PipelineConfig) -> int:
    tolerance = cfg.getint("decoding", "tolerance_frames", lo=0)
    detections = dec.read_detections(args.detections)
    utt_frames = _read_utt_frames(args.utt_frames)
    # the evaluated set is what was decoded; ignore references outside it
    all_refs = _read_references(args.references)
    references = {u: all_refs.get(u, []) for u in utt_frames}
    by_utt: dict[str, list] = {}
    for d in detections:
        by_utt.setdefault(d.utt_id, []).append(d)
    result = ev.score(by_utt, references, utt_frames, tolerance)
    out = _run_dir(args, cfg, "eval")
    line = (
        f"frr={result.frr:.6f} far_per_hour={result.far_per_hour:.6f} "
        f"tp={result.true_positives} fr={result.false_rejects} "
        f"fa={result.false_accepts} hours={result.total_audio_hours:.6f}"
    )
    with open(os.path.join(out, "eval.txt"), "w", encoding="ascii") as fh:
        fh.write(line + "\n")
    print(line)
    return EXIT_OK


def cmd_det(args, cfg: PipelineConfig) -> int:
    decode_cfg = dec.DecodeConfig(
        cfg.getint("decoding", "smooth_window_frames", lo=1),
        0.5,
        cfg.getint("decoding", "min_gap_frames", lo=0),
    )
    thresholds = cfg.thresholds()
    if len(thresholds) < 2:
        raise ConfigError("decoding.thresholds: need at least 2 thresholds")
    tolerance = cfg.getint("decoding", "tolerance_frames", lo=0)
    traces = _decode_traces(args)
    all_refs = _read_references(args.references)
    references = {u: all_refs.get(u, []) for u in traces}
    results = ev.det_curve(traces, references, decode_cfg, thresholds, tolerance)
    out = _run_dir(args, cfg, "det")
    ev.write_det_csv(results, os.path.join(out, "det.csv"))
    ev.det_svg([("model", results)], os.path.join(out, "det.svg"))
    print(os.path.join(out, "det.csv"))
    return EXIT_OK


def cmd_e2e_demo(args, cfg: PipelineConfig) -> int:
    demo_cfg = demo_mod.DemoConfig(
        n_train=cfg.getint("demo", "n_train", lo=10),
        n_test=cfg.getint("demo", "n_test", lo=10),
        test_snr_db=cfg.getfloat("demo", "test_snr_db"),
        epochs=cfg.getint("demo", "epochs", lo=1),
        learning_rate=cfg.getfloat("demo", "learning_rate", lo=1e-12),
        bottleneck=cfg.getint("demo", "bottleneck", lo=1),
        hidden=cfg.getint("demo", "hidden", lo=1),
        jobs=args.jobs,
    )
    seeds = cfg.getints("demo", "seeds")
    if args.seed is not None:
        seeds = [args.seed]
    if not seeds:
        raise ConfigError("demo.seeds: need at least one seed")
    out = _run_dir(args, cfg, "e2e-demo")
    suite = demo_mod.run_demo_suite(out, seeds, demo_cfg)
    print(
        f"{out}\tfrr_clean={suite['mean_frr_clean']:.4f}"
        f"\tfrr_mct={suite['mean_frr_mct']:.4f}"
        f"\trelative_reduction={suite['relative_frr_reduction']:.4f}"
    )
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wwspot", description="wake word spotting pipeline"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="sectioned key-value config file")
    common.add_argument(
        "--set",
        dest="set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="runs")
    common.add_argument(
        "--timestamp", action="store_true", help="append a timestamp to the run dir"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rir-gen", parents=[common], help="synthesize an RIR pool")
    p.set_defaults(func=cmd_rir_gen)

    p = sub.add_parser("augment", parents=[common], help="build the mixed-condition set")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--rir-dir")
    p.add_argument("--noise-dir")
    p.add_argument("--music-dir")
    p.add_argument("--mined", help="restrict the clean pool to these mined utterances")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("confusables", parents=[common], help="build the confusable-word set")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--frequencies")
    p.add_argument("--wake-word")
    p.set_defaults(func=cmd_confusables)

    p = sub.add_parser("mine", parents=[common], help="mine examples from hypotheses")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--confusables", required=True)
    p.add_argument("--wake-word")
    p.add_argument("--no-balance", dest="balance", action="store_false")
    p.set_defaults(func=cmd_mine, balance=True)

    p = sub.add_parser("featurize", parents=[common], help="dump LFBE features")
    p.add_argument("--wav-dir", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train the spotter")
    p.add_argument("--mined", required=True)
    p.add_argument("--audio-dir")
    p.add_argument("--augment-manifest")
    p.add_argument("--augment-root")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", parents=[common], help="detect wake words")
    p.add_argument("--model", required=True)
    p.add_argument("--wav-dir", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[common], help="score detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--utt-frames", required=True)
    p.add_argument("--references", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("det", parents=[common], help="sweep thresholds into a DET curve")
    p.add_argument("--model", required=True)
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--references", required=True)
    p.set_defaults(func=cmd_det)

    p = sub.add_parser("e2e-demo", parents=[common], help="full synthetic-corpus comparison")
    p.set_defaults(func=cmd_e2e_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and not (args.audio_dir or args.augment_manifest):
        print("train: need --audio-dir or --augment-manifest", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        DataError,
        AudioError,
        FeatureError,
        aug.AugmentError,
        lex.LexiconError,
        mining.MiningError,
        dec.DecodeError,
        ev.EvalError,
        ModelError,
        FileNotFoundError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
