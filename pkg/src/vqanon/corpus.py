"""Synthetic factorized corpus: frames entangle a content class with a speaker factor.

Each frame is built as ``scale_s * mu_c + offset_s + noise`` where ``mu_c`` is a
unit-norm content prototype and ``(scale_s, offset_s)`` are per-speaker factors.
The speaker factor acts both multiplicatively and additively so that simple mean
subtraction cannot remove it; a bottleneck has to do real work to discard it.
Ground-truth labels for both factors ship with every utterance so probes can
measure what survives any representation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError
from .f0 import F0Track

# Speaker factor ranges. Scale is kept away from 0 so no dimension collapses;
# the offset spread is the main knob controlling how separable speakers are.
SCALE_RANGE = (0.5, 2.0)
OFFSET_SIGMA = 0.15
F0_MEAN_RANGE = (100.0, 250.0)
F0_STD_RANGE = (8.0, 25.0)

# Content prototype rejection sampling.
MIN_PROTOTYPE_DISTANCE = 0.5
MAX_PROTOTYPE_DRAWS = 10_000

# Content segments emulate phoneme durations: short runs, never mergeable
# across a boundary because adjacent segments always change class.
SEGMENT_RUN_RANGE = (3, 8)

# F0 track structure.
VOICED_RUN_RANGE = (10, 40)
UNVOICED_RUN_RANGE = (2, 10)
F0_CLIP_RANGE = (50.0, 500.0)
F0_JITTER_FRACTION = 0.1

# Salts for per-purpose RNG streams, so utterance generation is
# order-independent and parallel-safe.
_STREAM_GLOBAL = 0
_STREAM_FRAMES = 1
_STREAM_F0 = 2
_STREAM_SPEAKER = 3
_STREAM_SPLIT = 4

_META_MAGIC = "vqanon-corpus 1"


@dataclass
class SpeakerProfile:
    """Per-speaker generative factors (identity stand-in)."""

    speaker_id: int
    offset: np.ndarray
    scale: np.ndarray
    f0_mean: float
    f0_std: float

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.offset.ndim != 1 or self.offset.shape != self.scale.shape:
            raise ValueError("offset and scale must be 1-D with equal length")
        if np.any(self.scale <= 0.0):
            raise ValueError("scale entries must be positive")
        if self.f0_mean <= 0.0 or self.f0_std < 0.0:
            raise ValueError("f0_mean must be positive and f0_std nonnegative")


@dataclass
class FrameSequence:
    """One utterance: frames, per-frame content labels, speaker id."""

    utterance_id: int
    speaker_id: int
    frames: np.ndarray
    content_labels: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.content_labels = np.asarray(self.content_labels, dtype=np.int64)
        if self.frames.ndim != 2:
            raise ValueError("frames must be 2-D (T x F)")
        if self.content_labels.shape != (self.frames.shape[0],):
            raise ValueError("content_labels must have one entry per frame")
        if self.frames.shape[0] < 10:
            raise ValueError("utterances must have at least 10 frames")
        if np.any(self.content_labels < 0):
            raise ValueError("content labels must be nonnegative")

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class CorpusConfig:
    num_speakers: int = 50
    num_content_classes: int = 40
    frame_dim: int = 24
    utterances_per_speaker: int = 40
    frames_per_utterance: int = 200
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        counts = (self.num_speakers, self.num_content_classes, self.frame_dim,
                  self.utterances_per_speaker)
        if any(int(c) < 2 for c in counts):
            raise ConfigError("all corpus counts must be >= 2")
        if self.frames_per_utterance < 10:
            raise ConfigError("frames_per_utterance must be >= 10")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass
class Corpus:
    """Utterances plus the ground-truth generative factors behind them."""

    config: CorpusConfig
    prototypes: np.ndarray
    speakers: list[SpeakerProfile]
    utterances: list[FrameSequence] = field(default_factory=list)

    @property
    def num_content_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def frame_dim(self) -> int:
        return self.prototypes.shape[1]

    def speaker(self, speaker_id: int) -> SpeakerProfile:
        return self.speakers[speaker_id]

    def __len__(self):
        return len(self.utterances)


def _draw_prototypes(num_classes, dim, rng):
    """Unit-norm class prototypes, pairwise separated by rejection sampling."""
    protos = np.empty((num_classes, dim))
    accepted = 0
    for draw in range(MAX_PROTOTYPE_DRAWS):
        cand = rng.normal(size=dim)
        cand /= np.linalg.norm(cand)
        if accepted and np.min(
                np.linalg.norm(protos[:accepted] - cand, axis=1)) < MIN_PROTOTYPE_DISTANCE:
            continue
        protos[accepted] = cand
        accepted += 1
        if accepted == num_classes:
            return protos
    raise ConfigError(
        f"could not place {num_classes} prototypes at min distance "
        f"{MIN_PROTOTYPE_DISTANCE} in {MAX_PROTOTYPE_DRAWS} draws")


def _draw_speaker(speaker_id, dim, seed):
    rng = np.random.default_rng([seed, _STREAM_SPEAKER, speaker_id])
    return SpeakerProfile(
        speaker_id=speaker_id,
        offset=rng.normal(0.0, OFFSET_SIGMA, size=dim),
        scale=rng.uniform(*SCALE_RANGE, size=dim),
        f0_mean=float(rng.uniform(*F0_MEAN_RANGE)),
        f0_std=float(rng.uniform(*F0_STD_RANGE)),
    )


def _segment_labels(num_frames, num_classes, rng):
    """Per-frame class labels in runs of 3..8 frames, adjacent runs distinct."""
    lo, hi = SEGMENT_RUN_RANGE
    labels = np.empty(num_frames, dtype=np.int64)
    pos = 0
    prev = -1
    while pos < num_frames:
        run = int(rng.integers(lo, hi + 1))
        rem = num_frames - pos
        if rem <= hi:
            run = rem          # close out exactly
        elif rem - run < lo:
            run = rem - lo     # leave room for one last legal run
        cls = int(rng.integers(num_classes))
        if cls == prev:
            cls = (cls + 1) % num_classes
        labels[pos:pos + run] = cls
        prev = cls
        pos += run
    return labels


def _generate_utterance(utterance_id, speaker, prototypes, config):
    rng = np.random.default_rng([config.seed, _STREAM_FRAMES, utterance_id])
    labels = _segment_labels(config.frames_per_utterance,
                             config.num_content_classes, rng)
    frames = prototypes[labels] * speaker.scale + speaker.offset
    if config.noise_sigma > 0.0:
        frames = frames + rng.normal(0.0, config.noise_sigma, size=frames.shape)
    return FrameSequence(utterance_id=utterance_id,
                         speaker_id=speaker.speaker_id,
                         frames=frames, content_labels=labels)


def generate_corpus(config: CorpusConfig) -> Corpus:
    """Generate the corpus deterministically from its config.

    Every utterance gets its own RNG stream keyed by (seed, utterance_id), so
    generation order cannot change the result.
    """
    global_rng = np.random.default_rng([config.seed, _STREAM_GLOBAL])
    prototypes = _draw_prototypes(config.num_content_classes, config.frame_dim,
                                  global_rng)
    speakers = [_draw_speaker(s, config.frame_dim, config.seed)
                for s in range(config.num_speakers)]
    utterances = []
    for speaker in speakers:
        base = speaker.speaker_id * config.utterances_per_speaker
        for k in range(config.utterances_per_speaker):
            utterances.append(_generate_utterance(base + k, speaker, prototypes,
                                                  config))
    return Corpus(config=config, prototypes=prototypes, speakers=speakers,
                  utterances=utterances)


def f0_rng(seed: int, utterance_id: int) -> np.random.Generator:
    """The dedicated RNG stream for an utterance's pitch track."""
    return np.random.default_rng([seed, _STREAM_F0, utterance_id])


def generate_f0_track(speaker: SpeakerProfile, length: int,
                      rng: np.random.Generator) -> F0Track:
    """Pitch track with alternating voiced/unvoiced runs.

    Voiced frames jitter independently around the speaker's f0_mean with std
    f0_std/10, clipped to the plausible range; a correlated walk would defeat
    the mean-concentration checks downstream, so samples are kept iid.
    Unvoiced frames carry value 0.
    """
    if length < 20:
        raise ValueError("f0 tracks must have at least 20 frames")
    voiced = np.zeros(length, dtype=bool)
    pos = 0
    is_voiced = True
    while pos < length:
        lo, hi = VOICED_RUN_RANGE if is_voiced else UNVOICED_RUN_RANGE
        run = int(rng.integers(lo, hi + 1))
        voiced[pos:pos + run] = is_voiced
        pos += run
        is_voiced = not is_voiced
    values = np.zeros(length)
    n_voiced = int(voiced.sum())
    jitter = rng.normal(0.0, speaker.f0_std * F0_JITTER_FRACTION, size=n_voiced)
    values[voiced] = np.clip(speaker.f0_mean + jitter, *F0_CLIP_RANGE)
    return F0Track(values=values, voiced=voiced)


def _classes_covered(utterances, num_classes):
    seen = np.zeros(num_classes, dtype=bool)
    for utt in utterances:
        seen[utt.content_labels] = True
    return bool(seen.all())


def split_corpus(corpus: Corpus, train_fraction: float,
                 seed: int) -> tuple[Corpus, Corpus]:
    """Split by utterance, stratified per speaker.

    Every speaker lands in both partitions by construction; full content-class
    coverage on both sides is verified and reshuffled a bounded number of times
    before giving up.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must be in (0, 1)")
    by_speaker: dict[int, list[FrameSequence]] = {}
    for utt in corpus.utterances:
        by_speaker.setdefault(utt.speaker_id, []).append(utt)
    for speaker_id, utts in by_speaker.items():
        if len(utts) < 2:
            raise ConfigError(
                f"speaker {speaker_id} has {len(utts)} utterance(s); "
                "need >= 2 to appear in both partitions")

    num_classes = corpus.num_content_classes
    for attempt in range(100):
        train_utts, eval_utts = [], []
        for speaker_id in sorted(by_speaker):
            utts = by_speaker[speaker_id]
            rng = np.random.default_rng(
                [seed, _STREAM_SPLIT, attempt, speaker_id])
            order = rng.permutation(len(utts))
            n_train = int(round(train_fraction * len(utts)))
            n_train = min(max(n_train, 1), len(utts) - 1)
            train_utts.extend(utts[i] for i in order[:n_train])
            eval_utts.extend(utts[i] for i in order[n_train:])
        if (_classes_covered(train_utts, num_classes)
                and _classes_covered(eval_utts, num_classes)):
            train_utts.sort(key=lambda u: u.utterance_id)
            eval_utts.sort(key=lambda u: u.utterance_id)
            train = Corpus(config=corpus.config, prototypes=corpus.prototypes,
                           speakers=corpus.speakers, utterances=train_utts)
            hold = Corpus(config=corpus.config, prototypes=corpus.prototypes,
                          speakers=corpus.speakers, utterances=eval_utts)
            return train, hold
    raise ConfigError(
        "could not stratify the split: some content class is missing from one "
        "partition in every attempted shuffle")


def _fmt_row(row):
    return " ".join(f"{v:.17g}" for v in row)


def save_corpus(corpus: Corpus, path) -> None:
    """Write the corpus as a directory: one metadata file + one file per utterance.

    All floats are printed with 17 significant digits so a load/save round trip
    is bit-exact.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = corpus.config
    lines = [_META_MAGIC]
    lines.append(f"num_speakers {cfg.num_speakers}")
    lines.append(f"num_content_classes {cfg.num_content_classes}")
    lines.append(f"frame_dim {cfg.frame_dim}")
    lines.append(f"utterances_per_speaker {cfg.utterances_per_speaker}")
    lines.append(f"frames_per_utterance {cfg.frames_per_utterance}")
    lines.append(f"noise_sigma {cfg.noise_sigma:.17g}")
    lines.append(f"seed {cfg.seed}")
    lines.append(f"num_utterances {len(corpus.utterances)}")
    for proto in corpus.prototypes:
        lines.append("prototype " + _fmt_row(proto))
    for spk in corpus.speakers:
        lines.append(f"speaker {spk.speaker_id} {spk.f0_mean:.17g} "
                     f"{spk.f0_std:.17g}")
        lines.append("offset " + _fmt_row(spk.offset))
        lines.append("scale " + _fmt_row(spk.scale))
    (path / "corpus_meta.txt").write_text("\n".join(lines) + "\n",
                                          encoding="utf-8")
    for utt in corpus.utterances:
        rows = [f"utterance {utt.utterance_id} speaker {utt.speaker_id} "
                f"frames {len(utt)}"]
        for label, frame in zip(utt.content_labels, utt.frames):
            rows.append(f"{label} " + _fmt_row(frame))
        (path / f"utt_{utt.utterance_id:06d}.txt").write_text(
            "\n".join(rows) + "\n", encoding="utf-8")


def _meta_value(lines, idx, key):
    parts = lines[idx].split()
    if len(parts) != 2 or parts[0] != key:
        raise ConfigError(f"corpus metadata line {idx + 1}: expected '{key}'")
    return parts[1]


def load_corpus(path) -> Corpus:
    """Load a corpus directory written by save_corpus."""
    path = Path(path)
    meta_path = path / "corpus_meta.txt"
    if not meta_path.is_file():
        raise ConfigError(f"not a corpus directory (no corpus_meta.txt): {path}")
    lines = meta_path.read_text(encoding="utf-8").splitlines()
    try:
        if lines[0] != _META_MAGIC:
            raise ConfigError(f"unrecognized corpus format: {lines[0]!r}")
        cfg = CorpusConfig(
            num_speakers=int(_meta_value(lines, 1, "num_speakers")),
            num_content_classes=int(_meta_value(lines, 2, "num_content_classes")),
            frame_dim=int(_meta_value(lines, 3, "frame_dim")),
            utterances_per_speaker=int(
                _meta_value(lines, 4, "utterances_per_speaker")),
            frames_per_utterance=int(
                _meta_value(lines, 5, "frames_per_utterance")),
            noise_sigma=float(_meta_value(lines, 6, "noise_sigma")),
            seed=int(_meta_value(lines, 7, "seed")),
        )
        num_utterances = int(_meta_value(lines, 8, "num_utterances"))
        cursor = 9
        prototypes = np.empty((cfg.num_content_classes, cfg.frame_dim))
        for c in range(cfg.num_content_classes):
            parts = lines[cursor].split()
            if parts[0] != "prototype":
                raise ConfigError(f"corpus metadata line {cursor + 1}: "
                                  "expected 'prototype'")
            prototypes[c] = [float(tok) for tok in parts[1:]]
            cursor += 1
        speakers = []
        for _ in range(cfg.num_speakers):
            head = lines[cursor].split()
            if head[0] != "speaker" or len(head) != 4:
                raise ConfigError(f"corpus metadata line {cursor + 1}: "
                                  "expected 'speaker'")
            offset = [float(tok) for tok in lines[cursor + 1].split()[1:]]
            scale = [float(tok) for tok in lines[cursor + 2].split()[1:]]
            speakers.append(SpeakerProfile(
                speaker_id=int(head[1]), offset=offset, scale=scale,
                f0_mean=float(head[2]), f0_std=float(head[3])))
            cursor += 3
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{meta_path}: malformed corpus metadata ({exc})") from None

    utterances = []
    for utt_path in sorted(path.glob("utt_*.txt")):
        rows = utt_path.read_text(encoding="utf-8").splitlines()
        try:
            head = rows[0].split()
            utterance_id, speaker_id, num_frames = (int(head[1]), int(head[3]),
                                                    int(head[5]))
            labels = np.empty(num_frames, dtype=np.int64)
            frames = np.empty((num_frames, cfg.frame_dim))
            for t in range(num_frames):
                parts = rows[t + 1].split()
                labels[t] = int(parts[0])
                frames[t] = [float(tok) for tok in parts[1:]]
            utterances.append(FrameSequence(
                utterance_id=utterance_id, speaker_id=speaker_id,
                frames=frames, content_labels=labels))
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"{utt_path}: malformed utterance ({exc})") from None
    if len(utterances) != num_utterances:
        raise ConfigError(f"{path}: expected {num_utterances} utterance files, "
                          f"found {len(utterances)}")
    utterances.sort(key=lambda u: u.utterance_id)
    return Corpus(config=cfg, prototypes=prototypes, speakers=speakers,
                  utterances=utterances)
