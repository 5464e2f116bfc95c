"""Experiment plans and the sweep runner: generate, train, evaluate, report.

A plan is a corpus config, shared trainer settings, an ordered list of
bottleneck conditions (codebook size, encoder depth, beta, seeds), and
optional pitch-track conditions. The runner trains one model per
(condition, seed), evaluates privacy and utility on a held-out split, and
emits per-run artifacts plus a combined CSV and trend figures.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import figures
from .config import (ConfigError, get_bool, get_float, get_int, get_int_list,
                     get_optional_size)
from .corpus import (Corpus, CorpusConfig, f0_rng, generate_corpus,
                     generate_f0_track, split_corpus)
from .f0 import F0Stats, add_awgn, f0_stats, linear_shift
from .metrics import (MetricsReport, ScoreSet, assemble_report, eer,
                      linkability, report_to_text, reports_to_csv,
                      save_scores)
from .model import (BottleneckModel, ModelConfig, ProbeConfig,
                    TrainingDivergedError, content_error_rate,
                    cosine_score, extract_features, loss_history_csv,
                    save_model, score_trials, subsample, train,
                    train_speaker_probe, utterance_embedding)

# Shared anonymization target for pitch statistics: one identity for everyone.
F0_COMMON_TARGET = F0Stats(mean=150.0, std=1.5, voiced_count=0)

_STREAM_F0_NOISE = 21


@dataclass
class Condition:
    """One bottleneck setting evaluated across several seeds."""

    name: str
    codebook_size: int | None
    encoder_depth: int = 3
    beta: float = 0.25
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])

    def __post_init__(self):
        if not self.name or any(c in self.name for c in ",\n"):
            raise ConfigError("condition name must be nonempty, no comma/newline")
        if not self.seeds:
            raise ConfigError(f"condition {self.name}: needs >= 1 seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"condition {self.name}: seeds must be distinct")


@dataclass
class F0ConditionFlags:
    shift_to_common_target: bool = False
    awgn_snr_db: float | None = None

    @property
    def active(self) -> bool:
        return self.shift_to_common_target or self.awgn_snr_db is not None


@dataclass
class ExperimentPlan:
    corpus: CorpusConfig
    conditions: list[Condition]
    hidden_dim: int = 256
    subsample_stride: int = 3
    epochs: int = 8
    batch_utterances: int = 24
    learning_rate: float = 1e-3
    ema_decay: float = 0.9
    train_fraction: float = 0.8
    num_bins: int = 100
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    f0: F0ConditionFlags = field(default_factory=F0ConditionFlags)

    def __post_init__(self):
        if not self.conditions:
            raise ConfigError("plan must define at least one condition")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")


@dataclass
class FailureRecord:
    condition: str
    seed: int
    message: str


@dataclass
class SweepResult:
    reports: list[MetricsReport]
    failures: list[FailureRecord]
    version: str
    plan_digest: str

    @property
    def ok(self) -> bool:
        return not self.failures


def corpus_config_from_sections(sections: dict,
                                seed_override: int | None = None) -> CorpusConfig:
    """CorpusConfig from a parsed config file's [corpus] section."""
    sec = sections.get("corpus", {})
    seed = get_int(sec, "seed", 0) if seed_override is None else seed_override
    return CorpusConfig(
        num_speakers=get_int(sec, "num_speakers", 50),
        num_content_classes=get_int(sec, "num_content_classes", 40),
        frame_dim=get_int(sec, "frame_dim", 24),
        utterances_per_speaker=get_int(sec, "utterances_per_speaker", 40),
        frames_per_utterance=get_int(sec, "frames_per_utterance", 200),
        noise_sigma=get_float(sec, "noise_sigma", 0.1),
        seed=seed,
    )


def model_config_from_sections(sections: dict,
                               seed_override: int | None = None) -> ModelConfig:
    """ModelConfig from a parsed config file's [model] section."""
    sec = sections.get("model", {})
    seed = get_int(sec, "seed", 0) if seed_override is None else seed_override
    return ModelConfig(
        encoder_depth=get_int(sec, "encoder_depth", 3),
        hidden_dim=get_int(sec, "hidden_dim", 256),
        codebook_size=get_optional_size(sec, "codebook_size", 64),
        subsample_stride=get_int(sec, "subsample_stride", 3),
        beta=get_float(sec, "beta", 0.25),
        epochs=get_int(sec, "epochs", 8),
        batch_utterances=get_int(sec, "batch_utterances", 24),
        learning_rate=get_float(sec, "learning_rate", 1e-3),
        ema_decay=get_float(sec, "ema_decay", 0.9),
        seed=seed,
    )


def plan_from_sections(sections: dict,
                       seed_override: int | None = None) -> ExperimentPlan:
    """Build a plan from parsed config sections.

    Conditions come from [condition <name>] sections in file order; [sweep]
    holds the shared settings, [f0] the optional pitch-condition flags.
    """
    corpus_cfg = corpus_config_from_sections(sections, seed_override)
    model_sec = sections.get("model", {})
    sweep_sec = sections.get("sweep", {})
    default_seeds = get_int_list(sweep_sec, "seeds", [1, 2, 3])

    conditions = []
    for name, sec in sections.items():
        if not name.startswith("condition "):
            continue
        cond_name = name[len("condition "):].strip()
        conditions.append(Condition(
            name=cond_name,
            codebook_size=get_optional_size(sec, "codebook_size", None),
            encoder_depth=get_int(sec, "encoder_depth", 3),
            beta=get_float(sec, "beta", 0.25),
            seeds=get_int_list(sec, "seeds", default_seeds),
        ))
    if not conditions:
        raise ConfigError("plan must define at least one [condition <name>] section")

    f0_sec = sections.get("f0", {})
    snr_raw = f0_sec.get("awgn_snr_db")
    f0_flags = F0ConditionFlags(
        shift_to_common_target=get_bool(f0_sec, "shift_to_common_target", False),
        awgn_snr_db=None if snr_raw is None or snr_raw.strip().lower() == "none"
        else get_float(f0_sec, "awgn_snr_db"),
    )
    return ExperimentPlan(
        corpus=corpus_cfg,
        conditions=conditions,
        hidden_dim=get_int(model_sec, "hidden_dim", 256),
        subsample_stride=get_int(model_sec, "subsample_stride", 3),
        epochs=get_int(model_sec, "epochs", 8),
        batch_utterances=get_int(model_sec, "batch_utterances", 24),
        learning_rate=get_float(model_sec, "learning_rate", 1e-3),
        ema_decay=get_float(model_sec, "ema_decay", 0.9),
        train_fraction=get_float(sweep_sec, "train_fraction", 0.8),
        num_bins=get_int(sweep_sec, "num_bins", 100),
        probe=ProbeConfig(steps=get_int(sweep_sec, "probe_steps", 400),
                          learning_rate=get_float(sweep_sec, "probe_lr", 0.05),
                          seed=get_int(sweep_sec, "probe_seed", 0)),
        f0=f0_flags,
    )


def plan_to_ini(plan: ExperimentPlan) -> str:
    """Serialize a plan back to config-file text (parse round-trips)."""
    c = plan.corpus
    lines = [
        "[corpus]",
        f"num_speakers = {c.num_speakers}",
        f"num_content_classes = {c.num_content_classes}",
        f"frame_dim = {c.frame_dim}",
        f"utterances_per_speaker = {c.utterances_per_speaker}",
        f"frames_per_utterance = {c.frames_per_utterance}",
        f"noise_sigma = {c.noise_sigma:.17g}",
        f"seed = {c.seed}",
        "",
        "[model]",
        f"hidden_dim = {plan.hidden_dim}",
        f"subsample_stride = {plan.subsample_stride}",
        f"epochs = {plan.epochs}",
        f"batch_utterances = {plan.batch_utterances}",
        f"learning_rate = {plan.learning_rate:.17g}",
        f"ema_decay = {plan.ema_decay:.17g}",
        "",
        "[sweep]",
        f"train_fraction = {plan.train_fraction:.17g}",
        f"num_bins = {plan.num_bins}",
        f"probe_steps = {plan.probe.steps}",
        f"probe_lr = {plan.probe.learning_rate:.17g}",
        f"probe_seed = {plan.probe.seed}",
    ]
    if plan.f0.active:
        lines += ["", "[f0]",
                  f"shift_to_common_target = {str(plan.f0.shift_to_common_target).lower()}"]
        if plan.f0.awgn_snr_db is not None:
            lines.append(f"awgn_snr_db = {plan.f0.awgn_snr_db:.17g}")
    for cond in plan.conditions:
        v = "none" if cond.codebook_size is None else str(cond.codebook_size)
        lines += ["", f"[condition {cond.name}]",
                  f"codebook_size = {v}",
                  f"encoder_depth = {cond.encoder_depth}",
                  f"beta = {cond.beta:.17g}",
                  "seeds = " + " ".join(str(s) for s in cond.seeds)]
    return "\n".join(lines) + "\n"


def plan_digest(plan: ExperimentPlan) -> str:
    """Content hash of the plan; stands in for wall-clock provenance."""
    return hashlib.sha256(plan_to_ini(plan).encode("utf-8")).hexdigest()[:16]


def default_benchmark_plan() -> ExperimentPlan:
    """The out-of-the-box bottleneck sweep: no-VQ control plus shrinking V."""
    corpus = CorpusConfig(num_speakers=30, num_content_classes=30, frame_dim=24,
                          utterances_per_speaker=20, frames_per_utterance=150,
                          noise_sigma=0.1, seed=1234)
    conditions = [
        Condition(name="no-vq", codebook_size=None),
        Condition(name="vq-256", codebook_size=256),
        Condition(name="vq-128", codebook_size=128),
        Condition(name="vq-64", codebook_size=64),
    ]
    return ExperimentPlan(corpus=corpus, conditions=conditions)


def default_capacity_plan() -> ExperimentPlan:
    """Encoder depth comparison at the tightest bottleneck.

    Runs on a cleaner corpus with a longer schedule than the bottleneck
    sweep so that both depths reach their attainable error floor and the
    comparison reflects capacity rather than optimization budget.
    """
    base = default_benchmark_plan()
    conditions = [
        Condition(name="depth-2", codebook_size=64, encoder_depth=2),
        Condition(name="depth-6", codebook_size=64, encoder_depth=6),
    ]
    return replace(base, corpus=replace(base.corpus, noise_sigma=0.04),
                   epochs=32, conditions=conditions)


def _per_utterance_features(model, utterances):
    stride = model.config.subsample_stride
    return [extract_features(model, subsample(u.frames, stride), "post_vq")
            for u in utterances]


def evaluate_model(model: BottleneckModel, train_split: Corpus,
                   eval_split: Corpus, condition: Condition, seed: int,
                   num_bins: int, probe: ProbeConfig):
    """Privacy and utility metrics for one trained model.

    The attacker probe is fit on the train split's features and assessed on
    the eval split; verification trials pair eval-split utterances only.
    Returns (report, mated scores, non-mated scores).
    """
    content_err = content_error_rate(model, eval_split)
    train_feats = _per_utterance_features(model, train_split.utterances)
    train_labels = [u.speaker_id for u in train_split.utterances]
    eval_feats = _per_utterance_features(model, eval_split.utterances)
    eval_labels = [u.speaker_id for u in eval_split.utterances]
    attacker = train_speaker_probe(train_feats, train_labels, probe)
    probe_acc = attacker.accuracy(eval_feats, eval_labels)
    embeddings = [utterance_embedding(f) for f in eval_feats]
    mated, nonmated = score_trials(embeddings, eval_labels, seed=seed)
    scores = ScoreSet(mated=mated, nonmated=nonmated)
    eer_value, _ = eer(scores)
    d_sys, _ = linkability(scores, num_bins)
    cfg = model.config
    v = "none" if cfg.codebook_size is None else str(cfg.codebook_size)
    echo = (f"V={v};depth={cfg.encoder_depth};beta={cfg.beta:g};"
            f"stride={cfg.subsample_stride};epochs={cfg.epochs};"
            f"hidden={cfg.hidden_dim}")
    report = assemble_report(condition.name, cfg.codebook_size, content_err,
                             probe_acc, eer_value, d_sys, echo, seed)
    return report, mated, nonmated


def _split_cache(plan, seed, cache):
    """Per-seed corpus generation and split, shared across conditions."""
    if seed not in cache:
        cfg = replace(plan.corpus, seed=plan.corpus.seed + seed)
        corpus = generate_corpus(cfg)
        cache[seed] = split_corpus(corpus, plan.train_fraction, seed)
    return cache[seed]


def _run_one(plan, condition, seed, run_dir, cache):
    train_split, eval_split = _split_cache(plan, seed, cache)
    model_cfg = ModelConfig(
        encoder_depth=condition.encoder_depth,
        hidden_dim=plan.hidden_dim,
        codebook_size=condition.codebook_size,
        subsample_stride=plan.subsample_stride,
        beta=condition.beta,
        epochs=plan.epochs,
        batch_utterances=plan.batch_utterances,
        learning_rate=plan.learning_rate,
        ema_decay=plan.ema_decay,
        seed=seed,
    )
    model = BottleneckModel.build(model_cfg, plan.corpus.frame_dim,
                                  plan.corpus.num_content_classes)
    history = train(model, train_split)
    report, mated, nonmated = evaluate_model(
        model, train_split, eval_split, condition, seed, plan.num_bins,
        plan.probe)

    run_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, run_dir / "checkpoint.vqm")
    (run_dir / "losses.csv").write_text(loss_history_csv(history),
                                        encoding="utf-8")
    figures.render_loss_curves(history, run_dir / "loss_curves.png")
    (run_dir / "report.txt").write_text(report_to_text(report),
                                        encoding="utf-8")
    save_scores(run_dir / "scores_mated.txt", mated)
    save_scores(run_dir / "scores_nonmated.txt", nonmated)
    figures.render_score_histogram(
        mated, nonmated, run_dir / "score_hist.png",
        title=f"{condition.name} seed {seed}")
    return report


def _f0_stat_features(tracks):
    """Per-utterance (mean, std) of the pitch track, as 1 x 2 matrices."""
    feats = []
    for track in tracks:
        stats = f0_stats(track)
        feats.append(np.array([[stats.mean, stats.std]]))
    return feats


def _f0_condition_rows(plan, seed, cache, out_dir):
    """Evaluate pitch-statistic leakage before and after the F0 transforms."""
    train_split, eval_split = _split_cache(plan, seed, cache)
    corpus_seed = plan.corpus.seed + seed
    length = max(plan.corpus.frames_per_utterance, 20)

    def tracks_for(split):
        out = []
        for utt in split.utterances:
            speaker = split.speaker(utt.speaker_id)
            out.append(generate_f0_track(speaker, length,
                                         f0_rng(corpus_seed, utt.utterance_id)))
        return out

    def transform(tracks, shift, snr_db):
        result = []
        for i, track in enumerate(tracks):
            t = track
            if shift:
                t = linear_shift(t, f0_stats(t), F0_COMMON_TARGET)
            if snr_db is not None:
                rng = np.random.default_rng([corpus_seed, _STREAM_F0_NOISE, i])
                t = add_awgn(t, snr_db, rng)
            result.append(t)
        return result

    variants = [("f0-clean", False, None)]
    if plan.f0.shift_to_common_target:
        variants.append(("f0-shift", True, None))
        if plan.f0.awgn_snr_db is not None:
            variants.append(
                (f"f0-shift+awgn{plan.f0.awgn_snr_db:g}", True,
                 plan.f0.awgn_snr_db))
    elif plan.f0.awgn_snr_db is not None:
        variants.append((f"f0-awgn{plan.f0.awgn_snr_db:g}", False,
                         plan.f0.awgn_snr_db))

    train_tracks = tracks_for(train_split)
    eval_tracks = tracks_for(eval_split)
    train_labels = [u.speaker_id for u in train_split.utterances]
    eval_labels = [u.speaker_id for u in eval_split.utterances]

    reports = []
    for name, shift, snr_db in variants:
        train_feats = _f0_stat_features(transform(train_tracks, shift, snr_db))
        eval_feats = _f0_stat_features(transform(eval_tracks, shift, snr_db))
        attacker = train_speaker_probe(train_feats, train_labels, plan.probe)
        probe_acc = attacker.accuracy(eval_feats, eval_labels)
        # z-score the (mean, std) pairs over the eval population so cosine
        # trials compare speakers, not the shared pitch range
        pooled = np.concatenate(eval_feats, axis=0)
        mu = pooled.mean(axis=0)
        sigma = pooled.std(axis=0)
        sigma[sigma == 0.0] = 1.0
        embeddings = [((f[0] - mu) / sigma) for f in eval_feats]
        mated, nonmated = score_trials(embeddings, eval_labels, seed=seed)
        scores = ScoreSet(mated=mated, nonmated=nonmated)
        eer_value, _ = eer(scores)
        d_sys, _ = linkability(scores, plan.num_bins)
        echo = (f"f0_target_mean={F0_COMMON_TARGET.mean:g};"
                f"f0_target_std={F0_COMMON_TARGET.std:g};"
                f"shift={str(shift).lower()};snr_db="
                + ("none" if snr_db is None else f"{snr_db:g}"))
        report = assemble_report(name, None, 0.0, probe_acc, eer_value, d_sys,
                                 echo, seed)
        run_dir = out_dir / name / f"seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "report.txt").write_text(report_to_text(report),
                                            encoding="utf-8")
        save_scores(run_dir / "scores_mated.txt", mated)
        save_scores(run_dir / "scores_nonmated.txt", nonmated)
        figures.render_score_histogram(mated, nonmated,
                                       run_dir / "score_hist.png",
                                       title=f"{name} seed {seed}")
        reports.append(report)
    return reports


def _median_line(reports, name):
    rows = [r for r in reports if r.condition == name]
    if not rows:
        return f"median {name}: no successful runs"
    med = {a: float(np.median([getattr(r, a) for r in rows]))
           for a in ("speaker_probe_accuracy", "eer", "content_error_rate",
                     "d_sys")}
    return (f"median {name}: probe_acc={med['speaker_probe_accuracy']:.4f} "
            f"eer={med['eer']:.4f} content_err={med['content_error_rate']:.4f} "
            f"d_sys={med['d_sys']:.4f}")


def run_sweep(plan: ExperimentPlan, out_dir) -> SweepResult:
    """Run every (condition, seed) pair; write reports, CSV, and figures.

    Run failures are recorded and do not stop the sweep; the result lists
    them so callers can signal partial failure.
    """
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache: dict = {}
    reports: list[MetricsReport] = []
    failures: list[FailureRecord] = []
    for condition in plan.conditions:
        for seed in condition.seeds:
            run_dir = out_dir / condition.name / f"seed{seed}"
            try:
                reports.append(_run_one(plan, condition, seed, run_dir, cache))
            except (TrainingDivergedError, FloatingPointError,
                    ValueError) as exc:
                failures.append(FailureRecord(condition.name, seed, str(exc)))
    if plan.f0.active:
        f0_seeds = plan.conditions[0].seeds
        for seed in f0_seeds:
            try:
                reports.extend(_f0_condition_rows(plan, seed, cache, out_dir))
            except (FloatingPointError, ValueError) as exc:
                failures.append(FailureRecord("f0", seed, str(exc)))

    (out_dir / "combined.csv").write_text(reports_to_csv(reports),
                                          encoding="utf-8")
    condition_order = []
    for r in reports:
        if r.condition not in condition_order:
            condition_order.append(r.condition)
    if reports:
        figures.render_sweep_trends(reports, condition_order,
                                    out_dir / "sweep_trends.png")

    digest = plan_digest(plan)
    lines = [
        "sweep summary",
        f"version {__version__}",
        f"plan_digest {digest}",
        f"runs_ok {len(reports)}",
        f"runs_failed {len(failures)}",
    ]
    for r in reports:
        lines.append(f"run {r.condition} seed {r.seed}: "
                     f"probe_acc={r.speaker_probe_accuracy:.4f} eer={r.eer:.4f} "
                     f"content_err={r.content_error_rate:.4f} d_sys={r.d_sys:.4f}")
    for f in failures:
        lines.append(f"failed {f.condition} seed {f.seed}: {f.message}")
    for name in condition_order:
        lines.append(_median_line(reports, name))
    (out_dir / "sweep_summary.txt").write_text("\n".join(lines) + "\n",
                                               encoding="utf-8")
    return SweepResult(reports=reports, failures=failures,
                       version=__version__, plan_digest=digest)
