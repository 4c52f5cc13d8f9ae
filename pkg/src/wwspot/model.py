"""The compact feed-forward spotter and its trainer.

The network maps a 620-dimensional stacked-LFBE vector through three
blocks of (linear bottleneck -> affine -> ReLU) to a 2-way softmax whose
second component is the wake-word posterior. The loss is frame-level
cross entropy in which the positive term is gated by the polarity of the
source utterance, so frames from negative utterances can only ever
contribute background evidence. Training is plain shuffled minibatch
gradient descent with analytic backpropagation; everything is float64
and deterministic under a fixed seed.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass

import numpy as np

from .features import LEFT_CONTEXT, RIGHT_CONTEXT, context_indices

Q_CLAMP = 1e-7
CHECKPOINT_MAGIC = "wwspot-checkpoint"
CHECKPOINT_VERSION = "v1"


class ModelError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SpotterConfig:
    input_dim: int = 620
    bottleneck: int = 87
    hidden: int = 400
    num_blocks: int = 3
    num_classes: int = 2

    def __post_init__(self):
        for name in ("input_dim", "bottleneck", "hidden", "num_blocks", "num_classes"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")

    def array_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter names and shapes in canonical (checkpoint) order."""
        shapes: list[tuple[str, tuple[int, ...]]] = []
        in_dim = self.input_dim
        for i in range(1, self.num_blocks + 1):
            shapes.append((f"bottleneck{i}", (in_dim, self.bottleneck)))
            shapes.append((f"weight{i}", (self.bottleneck, self.hidden)))
            shapes.append((f"bias{i}", (self.hidden,)))
            in_dim = self.hidden
        shapes.append(("weight_out", (self.hidden, self.num_classes)))
        shapes.append(("bias_out", (self.num_classes,)))
        return shapes


@dataclass
class FeatureScaler:
    """Per-dimension standardization fitted on the training features."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ModelError("scaler mean/std must be matching vectors")
        if not np.all(self.std > 0):
            raise ModelError("scaler std entries must be positive")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(np.zeros(dim), np.ones(dim))


@dataclass
class SpotterModel:
    config: SpotterConfig
    params: dict[str, np.ndarray]
    scaler: FeatureScaler

    def __post_init__(self):
        for name, shape in self.config.array_shapes():
            if name not in self.params:
                raise ModelError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ModelError(
                    f"parameter {name} has shape {self.params[name].shape}, "
                    f"expected {shape}"
                )
        if self.scaler.mean.size != self.config.input_dim:
            raise ModelError("scaler dimension does not match input_dim")


def init_model(
    config: SpotterConfig = SpotterConfig(),
    rng: np.random.Generator | int = 0,
    scaler: FeatureScaler | None = None,
) -> SpotterModel:
    """Scaled-uniform fan-in initialization; biases start at zero."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    params: dict[str, np.ndarray] = {}
    for name, shape in config.array_shapes():
        if name.startswith("bias"):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    if scaler is None:
        scaler = FeatureScaler.identity(config.input_dim)
    return SpotterModel(config, params, scaler)


def _forward_cached(model: SpotterModel, x: np.ndarray):
    # non-finite intermediates can only come from diverged parameters;
    # the trainer's loss guard reports those, so silence the warnings
    p = model.params
    cache = {"h": [x], "z": [], "a": []}
    h = x
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, model.config.num_blocks + 1):
            z = h @ p[f"bottleneck{i}"]
            a = z @ p[f"weight{i}"] + p[f"bias{i}"]
            h = np.maximum(a, 0.0)
            cache["z"].append(z)
            cache["a"].append(a)
            cache["h"].append(h)
        logits = h @ p["weight_out"] + p["bias_out"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        probs = expd / expd.sum(axis=1, keepdims=True)
    return probs, cache


def forward(model: SpotterModel, x: np.ndarray) -> np.ndarray:
    """Class posteriors for a batch of standardized input vectors."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.config.input_dim:
        raise ModelError(
            f"input dim {x.shape[1]} does not match model {model.config.input_dim}"
        )
    probs, _ = _forward_cached(model, x)
    return probs


def posteriors(model: SpotterModel, raw_x: np.ndarray) -> np.ndarray:
    """Forward pass on raw stacked features (applies the stored scaler)."""
    raw_x = np.atleast_2d(np.asarray(raw_x, dtype=np.float64))
    return forward(model, model.scaler.apply(raw_x))


def ssl_loss(
    q_ww: np.ndarray, targets: np.ndarray, is_positive_utt: np.ndarray
) -> tuple[float, float]:
    """Summed frame loss and its per-frame mean.

    Per frame with effective target ye = y AND (utterance is positive):
    -(ye * log q + (1 - ye) * log(1 - q)), with q clamped away from 0/1.
    Gating y by polarity makes the loss invariant to target values on
    frames of negative utterances.
    """
    q = np.clip(np.asarray(q_ww, dtype=np.float64), Q_CLAMP, 1.0 - Q_CLAMP)
    y_eff = np.asarray(targets, dtype=np.float64) * np.asarray(
        is_positive_utt, dtype=np.float64
    )
    per_frame = -(y_eff * np.log(q) + (1.0 - y_eff) * np.log1p(-q))
    total = float(per_frame.sum())
    return total, total / max(q.size, 1)


def gradient(
    model: SpotterModel,
    x: np.ndarray,
    targets: np.ndarray,
    is_positive_utt: np.ndarray,
) -> dict[str, np.ndarray]:
    """Analytic gradient of the summed loss for every weight and bias."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if model.config.num_classes != 2:
        raise ModelError("the frame loss is defined for 2-class models")
    probs, cache = _forward_cached(model, x)
    q = probs[:, 1]
    y_eff = np.asarray(targets, dtype=np.float64) * np.asarray(
        is_positive_utt, dtype=np.float64
    )
    qc = np.clip(q, Q_CLAMP, 1.0 - Q_CLAMP)
    active = (q > Q_CLAMP) & (q < 1.0 - Q_CLAMP)
    dq = (-y_eff / qc + (1.0 - y_eff) / (1.0 - qc)) * active
    dlogit1 = dq * q * (1.0 - q)
    dlogits = np.stack([-dlogit1, dlogit1], axis=1)

    p = model.params
    grads: dict[str, np.ndarray] = {}
    h_last = cache["h"][-1]
    grads["weight_out"] = h_last.T @ dlogits
    grads["bias_out"] = dlogits.sum(axis=0)
    dh = dlogits @ p["weight_out"].T
    for i in range(model.config.num_blocks, 0, -1):
        da = dh * (cache["a"][i - 1] > 0)
        grads[f"weight{i}"] = cache["z"][i - 1].T @ da
        grads[f"bias{i}"] = da.sum(axis=0)
        dz = da @ p[f"weight{i}"].T
        grads[f"bottleneck{i}"] = cache["h"][i - 1].T @ dz
        dh = dz @ p[f"bottleneck{i}"].T
    return grads


# --- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    minibatch_size: int = 256
    epochs: int = 10
    rng_seed: int = 0
    l2_coefficient: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be positive")
        if self.minibatch_size < 1:
            raise ModelError("minibatch_size must be >= 1")
        if self.epochs < 0:
            raise ModelError("epochs must be >= 0")
        if self.l2_coefficient < 0:
            raise ModelError("l2_coefficient must be >= 0")


class FrameDataset:
    """Frame-level training records with lazy context stacking.

    Rows of `base` are single feature frames; `gather` holds, per training
    record, the indices of the frames that concatenate into its input
    vector, so 620-dimensional vectors never need to be materialized for
    the whole dataset at once.
    """

    def __init__(
        self,
        base: np.ndarray,
        gather: np.ndarray,
        targets: np.ndarray,
        is_positive_utt: np.ndarray,
    ):
        self.base = np.asarray(base, dtype=np.float64)
        self.gather = np.asarray(gather, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.uint8)
        self.is_positive = np.asarray(is_positive_utt, dtype=bool)
        n = self.gather.shape[0]
        if not (self.targets.shape == self.is_positive.shape == (n,)):
            raise ModelError("dataset arrays disagree on the record count")
        if n == 0:
            raise ModelError("dataset is empty")
        if not np.isfinite(self.base).all():
            raise ModelError("dataset contains non-finite feature values")
        self.dim = self.gather.shape[1] * self.base.shape[1]

    def __len__(self) -> int:
        return self.gather.shape[0]

    @classmethod
    def from_vectors(
        cls, x: np.ndarray, targets: np.ndarray, is_positive_utt: np.ndarray
    ) -> "FrameDataset":
        x = np.asarray(x, dtype=np.float64)
        gather = np.arange(x.shape[0], dtype=np.int64)[:, None]
        return cls(x, gather, targets, is_positive_utt)

    @classmethod
    def from_utterances(
        cls, utterances, left: int = LEFT_CONTEXT, right: int = RIGHT_CONTEXT
    ) -> "FrameDataset":
        """Build from (lfbe_matrix, frame_targets, is_positive) triples;
        context windows never cross utterance boundaries."""
        bases, gathers, targets, polarity = [], [], [], []
        offset = 0
        for lfbe, utt_targets, is_pos in utterances:
            lfbe = np.asarray(lfbe, dtype=np.float64)
            n = lfbe.shape[0]
            if n != len(utt_targets):
                raise ModelError("frame targets do not match the feature length")
            bases.append(lfbe)
            gathers.append(context_indices(n, left, right) + offset)
            targets.append(np.asarray(utt_targets, dtype=np.uint8))
            polarity.append(np.full(n, bool(is_pos)))
            offset += n
        if not bases:
            raise ModelError("dataset is empty")
        return cls(
            np.concatenate(bases),
            np.concatenate(gathers),
            np.concatenate(targets),
            np.concatenate(polarity),
        )

    def batch(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.base[self.gather[idx]].reshape(len(idx), self.dim)
        return x, self.targets[idx], self.is_positive[idx]

    def effective_targets(self) -> np.ndarray:
        return (self.targets.astype(bool) & self.is_positive).astype(np.uint8)

    def fit_scaler(self) -> FeatureScaler:
        """Per-dimension mean/std over the stacked vectors, one context
        column at a time to keep memory flat. Constant dimensions get
        std 1 so standardization stays defined."""
        width = self.gather.shape[1]
        bins = self.base.shape[1]
        mean = np.empty(self.dim)
        sq = np.empty(self.dim)
        for k in range(width):
            cols = self.base[self.gather[:, k]]
            mean[k * bins : (k + 1) * bins] = cols.mean(axis=0)
            sq[k * bins : (k + 1) * bins] = np.square(cols).mean(axis=0)
        var = np.maximum(sq - mean**2, 0.0)
        std = np.sqrt(var)
        std[std < 1e-12] = 1.0
        return FeatureScaler(mean, std)


def train(
    dataset: FrameDataset,
    cfg: TrainConfig,
    model_cfg: SpotterConfig = SpotterConfig(),
) -> tuple[SpotterModel, list[float]]:
    """Fit the scaler, initialize, and run shuffled minibatch descent.

    Returns the trained model and the per-epoch mean frame loss. Raises
    TrainingDiverged as soon as a non-finite loss shows up.
    """
    if dataset.dim != model_cfg.input_dim:
        raise ModelError(
            f"dataset dim {dataset.dim} does not match model input {model_cfg.input_dim}"
        )
    y_eff = dataset.effective_targets()
    if y_eff.min() == y_eff.max():
        raise ModelError("training data has a single target class")

    rng = np.random.default_rng(cfg.rng_seed)
    scaler = dataset.fit_scaler()
    model = init_model(model_cfg, rng, scaler)
    n = len(dataset)
    log: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.minibatch_size):
            idx = order[lo : lo + cfg.minibatch_size]
            x, y, pos = dataset.batch(idx)
            x = scaler.apply(x)
            probs, _ = _forward_cached(model, x)
            loss, _ = ssl_loss(probs[:, 1], y, pos)
            if not np.isfinite(loss):
                raise TrainingDiverged("loss became non-finite; lower the learning rate")
            epoch_loss += loss
            grads = gradient(model, x, y, pos)
            scale = cfg.learning_rate / len(idx)
            for name, g in grads.items():
                if cfg.l2_coefficient:
                    model.params[name] -= (
                        scale * g + cfg.learning_rate * cfg.l2_coefficient * model.params[name]
                    )
                else:
                    model.params[name] -= scale * g
        log.append(epoch_loss / n)
    return model, log


# --- checkpoints ---------------------------------------------------------------


def save_model(model: SpotterModel, path: str | os.PathLike, mode: str = "text") -> None:
    """Single self-describing checkpoint file.

    `text` serializes arrays as %.17g decimals (lossless for float64 and
    byte-reproducible); `f32` packs little-endian 32-bit floats for
    compactness at reduced precision.
    """
    if mode not in ("text", "f32"):
        raise ModelError(f"unknown checkpoint mode {mode!r}")
    c = model.config
    arrays = [(name, model.params[name]) for name, _ in c.array_shapes()]
    arrays.append(("scaler_mean", model.scaler.mean))
    arrays.append(("scaler_std", model.scaler.std))
    meta = {
        "input_dim": c.input_dim,
        "bottleneck": c.bottleneck,
        "hidden": c.hidden,
        "num_blocks": c.num_blocks,
        "num_classes": c.num_classes,
        "nonlinearity": "relu",
        "arrays": [[name, list(a.shape)] for name, a in arrays],
    }
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {mode}\n".encode("ascii"))
        fh.write((json.dumps(meta, sort_keys=True) + "\n").encode("ascii"))
        for _, a in arrays:
            if mode == "text":
                rows = np.atleast_2d(a)
                text = "\n".join(
                    " ".join(f"{v:.17g}" for v in row) for row in rows
                )
                fh.write((text + "\n").encode("ascii"))
            else:
                fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _read_text_array(fh: io.BufferedReader, shape: tuple[int, ...]) -> np.ndarray:
    rows = shape[0] if len(shape) == 2 else 1
    values = []
    for _ in range(rows):
        line = fh.readline()
        if not line:
            raise ModelError("truncated checkpoint")
        values.append(np.asarray(line.split(), dtype=np.float64))
    out = np.concatenate(values)
    if out.size != int(np.prod(shape)):
        raise ModelError("truncated checkpoint")
    return out.reshape(shape)


def load_model(path: str | os.PathLike, expected_classes: int | None = None) -> SpotterModel:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 3 or header[0] != CHECKPOINT_MAGIC:
            raise ModelError(f"{path}: not a spotter checkpoint")
        if header[1] != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version {header[1]}")
        mode = header[2]
        if mode not in ("text", "f32"):
            raise ModelError(f"{path}: unknown checkpoint mode {mode!r}")
        try:
            meta = json.loads(fh.readline().decode("ascii"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelError(f"{path}: corrupt checkpoint header") from exc
        try:
            config = SpotterConfig(
                input_dim=meta["input_dim"],
                bottleneck=meta["bottleneck"],
                hidden=meta["hidden"],
                num_blocks=meta["num_blocks"],
                num_classes=meta["num_classes"],
            )
            listed = [(name, tuple(shape)) for name, shape in meta["arrays"]]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"{path}: corrupt checkpoint header") from exc
        expected = config.array_shapes() + [
            ("scaler_mean", (config.input_dim,)),
            ("scaler_std", (config.input_dim,)),
        ]
        if listed != expected:
            raise ModelError(f"{path}: checkpoint arrays do not match its shape header")
        if expected_classes is not None and config.num_classes != expected_classes:
            raise ModelError(
                f"{path}: checkpoint has {config.num_classes} classes, "
                f"expected {expected_classes}"
            )
        loaded: dict[str, np.ndarray] = {}
        for name, shape in expected:
            if mode == "text":
                loaded[name] = _read_text_array(fh, shape)
            else:
                count = int(np.prod(shape))
                raw = fh.read(count * 4)
                if len(raw) != count * 4:
                    raise ModelError(f"{path}: truncated checkpoint")
                loaded[name] = (
                    np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
                )
    scaler = FeatureScaler(loaded.pop("scaler_mean"), loaded.pop("scaler_std"))
    return SpotterModel(config, loaded, scaler)
