"""Encoder-bottleneck-classifier network, its trainer, and probe attackers.

The network maps frames through a relu MLP encoder to latents h, replaces h by
nearest codebook rows (straight-through on the backward pass), and classifies
the quantized latents into content classes. The codebook learns by EMA over
assigned latents, not by gradient. A speaker probe trained post hoc on frozen
features measures how much identity information survives the bottleneck.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import ConfigError
from .vq import (Codebook, DEFAULT_BETA, DEFAULT_RESEED_THRESHOLD,
                 codebook_from_bytes, codebook_perplexity, codebook_to_bytes,
                 commitment_loss, dead_code_reseed, ema_update,
                 quantization_error, quantize)

CHECKPOINT_MAGIC = b"VQAM0001"

LOSS_CSV_HEADER = "step,task,l_vq,l_vq_reg,total,perplexity"

# RNG stream salts (model side).
_STREAM_WEIGHTS = 10
_STREAM_SHUFFLE = 11
_STREAM_CODEBOOK = 12
_STREAM_RESEED = 13
_STREAM_TRIALS = 14


class TrainingDivergedError(FloatingPointError):
    """Loss went non-finite; carries the last finite step records."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass
class ModelConfig:
    encoder_depth: int = 3
    hidden_dim: int = 256
    codebook_size: int | None = 64   # None disables quantization entirely
    subsample_stride: int = 3
    beta: float = DEFAULT_BETA
    epochs: int = 8
    batch_utterances: int = 24
    learning_rate: float = 1e-3
    ema_decay: float = 0.9
    reseed_threshold: float = DEFAULT_RESEED_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.encoder_depth <= 8:
            raise ConfigError("encoder_depth must be in 1..8")
        if self.hidden_dim < 2:
            raise ConfigError("hidden_dim must be >= 2")
        if self.codebook_size is not None and self.codebook_size < 2:
            raise ConfigError("codebook_size must be >= 2 or none")
        if self.subsample_stride not in (1, 3):
            raise ConfigError("subsample_stride must be 1 or 3")
        if self.beta < 0.0:
            raise ConfigError("beta must be >= 0")
        if self.epochs < 1 or self.batch_utterances < 1:
            raise ConfigError("epochs and batch_utterances must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in (0, 1)")


@dataclass
class ForwardResult:
    logits: np.ndarray   # (J, C)
    h: np.ndarray        # (J, D)
    q: np.ndarray        # (J, D)
    indices: np.ndarray | None  # (J,) or None without a codebook


@dataclass
class StepRecord:
    step: int
    task: float
    l_vq: float
    l_vq_reg: float
    total: float
    perplexity: float


@dataclass
class BottleneckModel:
    config: ModelConfig
    input_dim: int
    num_classes: int
    enc_w: list
    enc_b: list
    cls_w: list
    cls_b: list
    codebook: Codebook | None

    @classmethod
    def build(cls, config: ModelConfig, input_dim: int,
              num_classes: int) -> "BottleneckModel":
        """Fresh model with seeded He-scaled weights and a placeholder codebook."""
        if input_dim < 1 or num_classes < 2:
            raise ConfigError("need input_dim >= 1 and num_classes >= 2")
        rng = np.random.default_rng([config.seed, _STREAM_WEIGHTS])
        d = config.hidden_dim

        def layer(fan_in, fan_out):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            return (ad.Tensor(w, requires_grad=True),
                    ad.Tensor(np.zeros((1, fan_out)), requires_grad=True))

        enc_w, enc_b = [], []
        fan_in = input_dim
        for _ in range(config.encoder_depth):
            w, b = layer(fan_in, d)
            enc_w.append(w)
            enc_b.append(b)
            fan_in = d
        cls_w, cls_b = [], []
        for fan_out in (d, num_classes):
            w, b = layer(fan_in, fan_out)
            cls_w.append(w)
            cls_b.append(b)
            fan_in = fan_out
        codebook = None
        if config.codebook_size is not None:
            codebook = Codebook.random_init(
                config.codebook_size, d,
                np.random.default_rng([config.seed, _STREAM_CODEBOOK]))
            codebook.decay = config.ema_decay
        return cls(config=config, input_dim=input_dim, num_classes=num_classes,
                   enc_w=enc_w, enc_b=enc_b, cls_w=cls_w, cls_b=cls_b,
                   codebook=codebook)

    def parameters(self) -> list:
        params = []
        for w, b in zip(self.enc_w, self.enc_b):
            params.extend((w, b))
        for w, b in zip(self.cls_w, self.cls_b):
            params.extend((w, b))
        return params


def subsample(frames: np.ndarray, stride: int) -> np.ndarray:
    """Every stride-th frame starting at offset 0: J = ceil(T / stride) rows."""
    return frames[::stride]


def _forward_tensors(model: BottleneckModel, frames: np.ndarray):
    """Run the op graph; records on the ambient tape when one is active."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.input_dim:
        raise ad.ShapeError(
            f"frames have shape {frames.shape}, model expects (*, {model.input_dim})")
    x = ad.Tensor(frames)
    for w, b in zip(model.enc_w, model.enc_b):
        y = ad.relu(ad.linear(x, w, b))
        # identity skip wherever shapes line up, so deep encoders stay trainable
        x = ad.add(y, x) if x.data.shape[1] == w.data.shape[1] else y
    h = x
    if model.codebook is not None:
        batch = quantize(h.data, model.codebook)
        q = ad.straight_through(h, batch.q)
        indices = batch.indices
    else:
        q, indices = h, None
    y = ad.relu(ad.linear(q, model.cls_w[0], model.cls_b[0]))
    logits = ad.linear(y, model.cls_w[1], model.cls_b[1])
    return logits, h, q, indices


def forward(model: BottleneckModel, frames: np.ndarray) -> ForwardResult:
    """Inference pass over already-subsampled frames."""
    logits, h, q, indices = _forward_tensors(model, frames)
    return ForwardResult(logits=logits.data, h=h.data, q=q.data,
                         indices=indices)


def _utterance_list(data):
    return list(data.utterances) if hasattr(data, "utterances") else list(data)


def _init_codebook_from_data(model, utterances, rng):
    """Data-driven prototype init: distinct encoder outputs of a sample batch."""
    need = model.config.codebook_size
    stride = model.config.subsample_stride
    rows = []
    total = 0
    for utt in utterances:
        h = forward(model, subsample(utt.frames, stride)).h
        rows.append(h)
        total += h.shape[0]
        if total >= max(4 * need, 1024):
            break
    latents = np.concatenate(rows, axis=0)
    if latents.shape[0] < need:
        raise ConfigError(
            f"corpus too small to seed a codebook of {need} prototypes")
    model.codebook = Codebook.from_latents(latents, need, rng=rng,
                                           decay=model.codebook.decay,
                                           laplace_eps=model.codebook.laplace_eps)


def train(model: BottleneckModel, train_data) -> list[StepRecord]:
    """Optimize the model on the utterances; returns per-step loss records.

    Each step runs cross-entropy plus beta * commitment loss through the tape,
    applies one Adam update, then refreshes the codebook by EMA and reseeds
    prototypes whose running counts have decayed to nothing. The quantization
    error l_vq is monitored as a loss term but contributes no gradient: the
    EMA update owns the codebook.
    """
    cfg = model.config
    utterances = _utterance_list(train_data)
    if not utterances:
        raise ConfigError("training corpus is empty")
    shuffle_rng = np.random.default_rng([cfg.seed, _STREAM_SHUFFLE])
    reseed_rng = np.random.default_rng([cfg.seed, _STREAM_RESEED])
    if model.codebook is not None:
        _init_codebook_from_data(
            model, utterances,
            np.random.default_rng([cfg.seed, _STREAM_CODEBOOK, 1]))

    params = model.parameters()
    opt = ad.adam_state(params)
    history: list[StepRecord] = []
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(utterances))
        for lo in range(0, len(order), cfg.batch_utterances):
            chunk = [utterances[i] for i in order[lo:lo + cfg.batch_utterances]]
            frames = np.concatenate(
                [subsample(u.frames, cfg.subsample_stride) for u in chunk])
            labels = np.concatenate(
                [subsample(u.content_labels, cfg.subsample_stride)
                 for u in chunk])
            with ad.Tape() as tape:
                logits, h, q, indices = _forward_tensors(model, frames)
                task = ad.softmax_cross_entropy(logits, labels)
                if model.codebook is not None:
                    # normalize the summed VQ penalties per latent element so
                    # beta keeps its meaning next to the mean cross-entropy
                    norm = 1.0 / h.data.size
                    commit = commitment_loss(h, q.data)
                    loss = ad.add(task, ad.scale(commit, cfg.beta * norm))
                else:
                    loss = task
            task_v = float(task.data[0, 0])
            if model.codebook is not None:
                l_reg = float(commit.data[0, 0]) * norm
                l_vq = quantization_error(h.data, q.data) * norm
            else:
                l_reg = l_vq = 0.0
            total = task_v + l_vq + cfg.beta * l_reg
            perplexity = (codebook_perplexity(indices, model.codebook.size)
                          if model.codebook is not None else 0.0)
            if not np.isfinite(total):
                raise TrainingDivergedError(
                    f"step {step}: non-finite loss (task={task_v}, l_vq={l_vq}, "
                    f"l_vq_reg={l_reg}) on a batch of {len(chunk)} utterances",
                    history)
            ad.backward(tape, loss)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                     for p in params]
            ad.adam_step(params, grads, opt, lr=cfg.learning_rate)
            for p in params:
                p.zero_grad()
            if model.codebook is not None:
                ema_update(model.codebook, h.data, indices)
                dead_code_reseed(model.codebook, h.data,
                                 cfg.reseed_threshold, reseed_rng)
            history.append(StepRecord(step=step, task=task_v, l_vq=l_vq,
                                      l_vq_reg=l_reg, total=total,
                                      perplexity=perplexity))
            step += 1
    return history


def loss_history_csv(history: list[StepRecord]) -> str:
    lines = [LOSS_CSV_HEADER]
    for rec in history:
        lines.append(f"{rec.step},{rec.task:.17g},{rec.l_vq:.17g},"
                     f"{rec.l_vq_reg:.17g},{rec.total:.17g},"
                     f"{rec.perplexity:.17g}")
    return "\n".join(lines) + "\n"


def extract_features(model: BottleneckModel, frames: np.ndarray,
                     tap: str) -> np.ndarray:
    """Latent features for already-subsampled frames.

    ``pre_vq`` returns the continuous h; ``post_vq`` returns the quantized q,
    the anonymization-relevant output (identical to h without a codebook).
    """
    if tap not in ("pre_vq", "post_vq"):
        raise ValueError(f"tap must be 'pre_vq' or 'post_vq', got {tap!r}")
    result = forward(model, frames)
    return result.h if tap == "pre_vq" else result.q


def content_error_rate(model: BottleneckModel, data) -> float:
    """Frame-level argmax error over subsampled labels (lower is better)."""
    stride = model.config.subsample_stride
    wrong = 0
    total = 0
    for utt in _utterance_list(data):
        result = forward(model, subsample(utt.frames, stride))
        labels = subsample(utt.content_labels, stride)
        wrong += int((np.argmax(result.logits, axis=1) != labels).sum())
        total += labels.shape[0]
    if total == 0:
        raise ConfigError("no frames to evaluate")
    return wrong / total


def utterance_embedding(features: np.ndarray) -> np.ndarray:
    """Mean over frames, length-normalized; an all-zero mean stays zero."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ad.ShapeError("features must be a nonempty J x D matrix")
    pooled = features.mean(axis=0)
    norm = np.linalg.norm(pooled)
    return pooled / norm if norm > 0.0 else pooled


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; any zero vector scores 0 against everything."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ad.ShapeError("embeddings must be 1-D with equal dims")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a / na, b / nb))


def score_trials(embeddings: list, labels: list, seed: int = 0,
                 nonmated_ratio: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """All same-speaker pair scores, plus a seeded sample of cross-speaker pairs.

    Non-mated trials are capped at nonmated_ratio times the mated count so
    score files stay balanced across conditions.
    """
    if len(embeddings) != len(labels):
        raise ValueError("one label per embedding required")
    labels = np.asarray(labels)
    n = len(labels)
    mated_pairs = []
    nonmated_pairs = []
    for i in range(n):
        same = labels[i + 1:] == labels[i]
        for off in np.flatnonzero(same):
            mated_pairs.append((i, i + 1 + off))
        for off in np.flatnonzero(~same):
            nonmated_pairs.append((i, i + 1 + off))
    if not mated_pairs:
        raise ValueError("no mated pairs: need >= 2 utterances for some speaker")
    if not nonmated_pairs:
        raise ValueError("no non-mated pairs: need >= 2 distinct speakers")
    cap = nonmated_ratio * len(mated_pairs)
    if len(nonmated_pairs) > cap:
        rng = np.random.default_rng([seed, _STREAM_TRIALS])
        picked = rng.choice(len(nonmated_pairs), size=cap, replace=False)
        nonmated_pairs = [nonmated_pairs[k] for k in sorted(picked)]
    mated = np.array([cosine_score(embeddings[i], embeddings[j])
                      for i, j in mated_pairs])
    nonmated = np.array([cosine_score(embeddings[i], embeddings[j])
                         for i, j in nonmated_pairs])
    return mated, nonmated


@dataclass
class ProbeConfig:
    steps: int = 400
    learning_rate: float = 0.05
    seed: int = 0


@dataclass
class SpeakerProbe:
    """Linear softmax attacker on mean-pooled utterance features."""

    weight: np.ndarray        # (D, K)
    bias: np.ndarray          # (1, K)
    class_ids: np.ndarray     # (K,) original speaker ids
    feature_mean: np.ndarray  # (D,) standardization learned on train data
    feature_scale: np.ndarray

    def _pool(self, features_list):
        pooled = np.stack([np.asarray(f, dtype=np.float64).mean(axis=0)
                           for f in features_list])
        return (pooled - self.feature_mean) / self.feature_scale

    def predict(self, features_list: list) -> np.ndarray:
        """Predicted speaker id for each utterance's J x D feature matrix."""
        logits = self._pool(features_list) @ self.weight + self.bias
        return self.class_ids[np.argmax(logits, axis=1)]

    def accuracy(self, features_list: list, labels: list) -> float:
        predictions = self.predict(features_list)
        return float(np.mean(predictions == np.asarray(labels)))


def train_speaker_probe(features_list: list, labels: list,
                        config: ProbeConfig | None = None) -> SpeakerProbe:
    """Fit the attacker probe on frozen features (full-batch Adam)."""
    config = config or ProbeConfig()
    if len(features_list) != len(labels):
        raise ValueError("one speaker label per utterance required")
    labels = np.asarray(labels)
    class_ids = np.unique(labels)
    if class_ids.shape[0] < 2:
        raise ValueError("speaker probe needs >= 2 distinct speakers")
    targets = np.searchsorted(class_ids, labels)

    pooled = np.stack([np.asarray(f, dtype=np.float64).mean(axis=0)
                       for f in features_list])
    mean = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    scale[scale == 0.0] = 1.0
    x = ad.Tensor((pooled - mean) / scale)

    rng = np.random.default_rng([config.seed, 15])
    dim, k = pooled.shape[1], class_ids.shape[0]
    w = ad.Tensor(rng.normal(0.0, 0.01, size=(dim, k)), requires_grad=True)
    b = ad.Tensor(np.zeros((1, k)), requires_grad=True)
    params = [w, b]
    opt = ad.adam_state(params)
    for _ in range(config.steps):
        with ad.Tape() as tape:
            loss = ad.softmax_cross_entropy(ad.linear(x, w, b), targets)
        ad.backward(tape, loss)
        grads = [p.grad for p in params]
        ad.adam_step(params, grads, opt, lr=config.learning_rate)
        for p in params:
            p.zero_grad()
    return SpeakerProbe(weight=w.data, bias=b.data, class_ids=class_ids,
                        feature_mean=mean, feature_scale=scale)


def _pack_matrix(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return struct.pack("<2q", *arr.shape) + arr.tobytes()


def _unpack_matrix(blob, offset):
    rows, cols = struct.unpack_from("<2q", blob, offset)
    offset += 16
    n = rows * cols * 8
    arr = np.frombuffer(blob[offset:offset + n], dtype=np.float64)
    return arr.reshape(rows, cols).copy(), offset + n


def save_model(model: BottleneckModel, path) -> None:
    """Versioned binary checkpoint: config, weights, codebook; exact round-trip."""
    cfg = model.config
    tensors = model.parameters()
    head = struct.pack(
        "<10q4d",
        cfg.encoder_depth, cfg.hidden_dim,
        cfg.codebook_size if cfg.codebook_size is not None else 0,
        cfg.subsample_stride, cfg.epochs, cfg.batch_utterances, cfg.seed,
        model.input_dim, model.num_classes, len(tensors),
        cfg.beta, cfg.learning_rate, cfg.ema_decay, cfg.reseed_threshold)
    blob = bytearray(CHECKPOINT_MAGIC + head)
    for t in tensors:
        blob += _pack_matrix(t.data)
    if model.codebook is not None:
        cb = codebook_to_bytes(model.codebook)
        blob += struct.pack("<q", len(cb)) + cb
    else:
        blob += struct.pack("<q", 0)
    Path(path).write_bytes(bytes(blob))


def load_model(path) -> BottleneckModel:
    blob = Path(path).read_bytes()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ConfigError(f"not a model checkpoint: {path}")
    (depth, hidden, v, stride, epochs, batch, seed, input_dim, num_classes,
     n_tensors) = struct.unpack_from("<10q", blob, 8)
    beta, lr, decay, reseed = struct.unpack_from("<4d", blob, 88)
    cfg = ModelConfig(encoder_depth=depth, hidden_dim=hidden,
                      codebook_size=v if v > 0 else None,
                      subsample_stride=stride, beta=beta, epochs=epochs,
                      batch_utterances=batch, learning_rate=lr,
                      ema_decay=decay, reseed_threshold=reseed, seed=seed)
    offset = 120
    tensors = []
    for _ in range(n_tensors):
        data, offset = _unpack_matrix(blob, offset)
        tensors.append(ad.Tensor(data, requires_grad=True))
    (cb_len,) = struct.unpack_from("<q", blob, offset)
    offset += 8
    codebook = (codebook_from_bytes(blob[offset:offset + cb_len])
                if cb_len > 0 else None)
    enc_w = tensors[0:2 * depth:2]
    enc_b = tensors[1:2 * depth:2]
    cls_w = [tensors[2 * depth], tensors[2 * depth + 2]]
    cls_b = [tensors[2 * depth + 1], tensors[2 * depth + 3]]
    return BottleneckModel(config=cfg, input_dim=input_dim,
                           num_classes=num_classes, enc_w=enc_w, enc_b=enc_b,
                           cls_w=cls_w, cls_b=cls_b, codebook=codebook)


def save_features(path, utterance_id: int, speaker_id: int, tap: str,
                  matrix: np.ndarray) -> None:
    """One utterance's feature matrix as text (17 significant digits)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    rows = [f"features {utterance_id} speaker {speaker_id} "
            f"rows {matrix.shape[0]} dim {matrix.shape[1]} tap {tap}"]
    for row in matrix:
        rows.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_features(path) -> tuple[int, int, str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        head = lines[0].split()
        utterance_id, speaker_id = int(head[1]), int(head[3])
        n_rows, dim, tap = int(head[5]), int(head[7]), head[9]
        matrix = np.empty((n_rows, dim))
        for r in range(n_rows):
            matrix[r] = [float(tok) for tok in lines[r + 1].split()]
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed feature file ({exc})") from None
    return utterance_id, speaker_id, tap, matrix
