"""Command-line entry points: gen-data, train, eval, sweep, f0.

Exit codes: 0 success, 2 input/validation problems, 3 numerical or runtime
failures. Every command is a pure function of its config; seeds live in
configs or flags, never in wall clocks, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import figures
from .config import ConfigError, load_ini
from .corpus import generate_corpus, load_corpus, save_corpus, split_corpus
from .f0 import (DegenerateTrackError, F0Stats, TrackFormatError, add_awgn,
                 f0_stats, linear_shift, load_track, measured_snr, save_track)
from .metrics import (ScoreSet, assemble_report, eer, linkability,
                      report_csv_row, report_to_text, REPORT_CSV_HEADER,
                      save_scores)
from .model import (TrainingDivergedError, content_error_rate,
                    extract_features, load_model, loss_history_csv,
                    save_features, save_model, score_trials, subsample,
                    train, train_speaker_probe, utterance_embedding,
                    BottleneckModel)
from .sweep import (corpus_config_from_sections, default_benchmark_plan,
                    default_capacity_plan, model_config_from_sections,
                    plan_from_sections, run_sweep)

_F0_NOISE_SALT = 22
_EVAL_PROBE_FRACTION = 0.7


def cmd_gen_data(args) -> int:
    sections = load_ini(args.config) if args.config else {}
    cfg = corpus_config_from_sections(sections, seed_override=args.seed)
    corpus = generate_corpus(cfg)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus.utterances)} utterances "
          f"({cfg.num_speakers} speakers x {cfg.utterances_per_speaker}) "
          f"to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    sections = load_ini(args.config) if args.config else {}
    cfg = model_config_from_sections(sections, seed_override=args.seed)
    model = BottleneckModel.build(cfg, corpus.config.frame_dim,
                                  corpus.config.num_content_classes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        history = train(model, corpus)
    except TrainingDivergedError as exc:
        # leave the last finite losses behind for diagnosis
        (out / "losses.csv").write_text(loss_history_csv(exc.history),
                                        encoding="utf-8")
        raise
    save_model(model, out / "checkpoint.vqm")
    (out / "losses.csv").write_text(loss_history_csv(history),
                                    encoding="utf-8")
    figures.render_loss_curves(history, out / "loss_curves.png")
    last = history[-1]
    print(f"trained {len(history)} steps; final task={last.task:.4f} "
          f"l_vq={last.l_vq:.4f} total={last.total:.4f} "
          f"perplexity={last.perplexity:.2f}")
    print(f"checkpoint: {out / 'checkpoint.vqm'}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    corpus = load_corpus(args.corpus)
    if corpus.config.frame_dim != model.input_dim:
        raise ConfigError(
            f"corpus frame_dim {corpus.config.frame_dim} does not match "
            f"model input dim {model.input_dim}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stride = model.config.subsample_stride

    content_err = content_error_rate(model, corpus)
    features = [extract_features(model, subsample(u.frames, stride), args.tap)
                for u in corpus.utterances]
    labels = [u.speaker_id for u in corpus.utterances]

    # attacker probe: fit on one part of this corpus, assess on the rest
    probe_train, probe_eval = split_corpus(corpus, _EVAL_PROBE_FRACTION,
                                           args.seed)
    index = {u.utterance_id: i for i, u in enumerate(corpus.utterances)}
    train_ids = [index[u.utterance_id] for u in probe_train.utterances]
    eval_ids = [index[u.utterance_id] for u in probe_eval.utterances]
    probe = train_speaker_probe([features[i] for i in train_ids],
                                [labels[i] for i in train_ids])
    probe_acc = probe.accuracy([features[i] for i in eval_ids],
                               [labels[i] for i in eval_ids])

    embeddings = [utterance_embedding(f) for f in features]
    mated, nonmated = score_trials(embeddings, labels, seed=args.seed)
    scores = ScoreSet(mated=mated, nonmated=nonmated)
    eer_value, threshold = eer(scores)
    d_sys, _ = linkability(scores, args.bins)

    cfg = model.config
    v = "none" if cfg.codebook_size is None else str(cfg.codebook_size)
    echo = (f"tap={args.tap};V={v};depth={cfg.encoder_depth};"
            f"beta={cfg.beta:g};stride={cfg.subsample_stride}")
    report = assemble_report(f"eval-{args.tap}", cfg.codebook_size,
                             content_err, probe_acc, eer_value, d_sys, echo,
                             args.seed)
    (out / "report.txt").write_text(report_to_text(report), encoding="utf-8")
    (out / "report.csv").write_text(
        REPORT_CSV_HEADER + "\n" + report_csv_row(report) + "\n",
        encoding="utf-8")
    save_scores(out / "scores_mated.txt", mated)
    save_scores(out / "scores_nonmated.txt", nonmated)
    figures.render_score_histogram(mated, nonmated, out / "score_hist.png",
                                   title=f"eval {args.tap} "
                                         f"(EER {eer_value:.3f})")
    if args.dump_features:
        feat_dir = out / "features"
        feat_dir.mkdir(exist_ok=True)
        for utt, feat in zip(corpus.utterances, features):
            save_features(feat_dir / f"feat_{utt.utterance_id:06d}.txt",
                          utt.utterance_id, utt.speaker_id, args.tap, feat)
    print(f"content_err={content_err:.4f} probe_acc={probe_acc:.4f} "
          f"eer={eer_value:.4f} (thr {threshold:.4f}) d_sys={d_sys:.4f}")
    print(f"report: {out / 'report.txt'}")
    return 0


def cmd_sweep(args) -> int:
    if args.benchmark:
        plan = default_benchmark_plan()
    elif args.capacity:
        plan = default_capacity_plan()
    elif args.config:
        plan = plan_from_sections(load_ini(args.config),
                                  seed_override=args.seed)
    else:
        raise ConfigError("sweep needs --config PLAN, --benchmark, or --capacity")
    result = run_sweep(plan, args.out)
    for line in (Path(args.out) / "sweep_summary.txt").read_text(
            encoding="utf-8").splitlines():
        if line.startswith(("median", "failed", "runs_")):
            print(line)
    print(f"combined CSV: {Path(args.out) / 'combined.csv'}")
    if not result.ok:
        print(f"error: {len(result.failures)} run(s) failed", file=sys.stderr)
        return 3
    return 0


def cmd_f0(args) -> int:
    track = load_track(args.in_path)
    src = f0_stats(track)
    if args.target_mean is None or args.target_std is None:
        raise ConfigError("f0 needs --target-mean and --target-std")
    tgt = F0Stats(mean=args.target_mean, std=args.target_std, voiced_count=0)
    shifted = linear_shift(track, src, tgt)
    measured = None
    result = shifted
    if args.snr_db is not None:
        rng = np.random.default_rng([args.seed, _F0_NOISE_SALT])
        result = add_awgn(shifted, args.snr_db, rng)
        measured = measured_snr(shifted, result)
    save_track(result, args.out)
    snr_text = "none" if measured is None else f"{measured:.4f}"
    print(f"src_mean={src.mean:.6f} src_std={src.std:.6f} "
          f"tgt_mean={tgt.mean:.6f} tgt_std={tgt.std:.6f} "
          f"measured_snr_db={snr_text}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqanon",
        description="Vector-quantization bottleneck laboratory: synthetic "
                    "corpora, bottleneck training, privacy metrics, and pitch "
                    "transforms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus directory")
    p.add_argument("--config", help="config file with a [corpus] section")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=None, help="override corpus seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a bottleneck model on a corpus")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--config", help="config file with a [model] section")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override model seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint's privacy/utility")
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--corpus", required=True, help="evaluation corpus directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tap", choices=("pre_vq", "post_vq"), default="post_vq",
                   help="which latent tap to evaluate")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for probe split and trial sampling")
    p.add_argument("--bins", type=int, default=100,
                   help="histogram bins for linkability")
    p.add_argument("--dump-features", action="store_true",
                   help="also write per-utterance feature matrices")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a multi-condition experiment plan")
    p.add_argument("--config", help="plan file ([corpus]/[model]/[sweep]/"
                                    "[condition <name>] sections)")
    p.add_argument("--benchmark", action="store_true",
                   help="run the built-in bottleneck-size sweep")
    p.add_argument("--capacity", action="store_true",
                   help="run the built-in encoder-depth sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the plan's corpus seed")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("f0", help="shift a pitch track's statistics, "
                                  "optionally add noise")
    p.add_argument("--in", dest="in_path", required=True,
                   help="input track file (value_hz voiced_flag per line)")
    p.add_argument("--out", required=True, help="output track file")
    p.add_argument("--target-mean", type=float, help="target mean in Hz")
    p.add_argument("--target-std", type=float, help="target std in Hz")
    p.add_argument("--snr-db", type=float, default=None,
                   help="add white Gaussian noise at this SNR")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.set_defaults(func=cmd_f0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrackFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateTrackError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
