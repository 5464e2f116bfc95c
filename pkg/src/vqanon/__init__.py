"""vqanon: a desk-scale laboratory for removing speaker identity from
acoustic-style representations with a vector-quantization bottleneck.

The package generates a synthetic factorized corpus, trains an
encoder-quantizer-classifier network on it, measures how much speaker
information survives the bottleneck (probe accuracy, EER, linkability), and
applies statistics-matching transforms to pitch tracks.
"""

__version__ = "0.1.0"

from .autodiff import (ShapeError, Tape, Tensor, adam_state, adam_step,
                       backward, gradient_check)
from .config import ConfigError, load_ini
from .corpus import (Corpus, CorpusConfig, FrameSequence, SpeakerProfile,
                     generate_corpus, generate_f0_track, load_corpus,
                     save_corpus, split_corpus)
from .f0 import (DegenerateTrackError, F0Stats, F0Track, TrackFormatError,
                 add_awgn, f0_stats, linear_shift, load_track, measured_snr,
                 save_track)
from .metrics import (MetricsReport, ScoreSet, assemble_report, eer,
                      linkability, load_scores, parse_report, report_to_text,
                      reports_to_csv, save_scores)
from .model import (BottleneckModel, ModelConfig, ProbeConfig, SpeakerProbe,
                    TrainingDivergedError, content_error_rate, cosine_score,
                    extract_features, forward, load_model, save_model,
                    score_trials, subsample, train, train_speaker_probe,
                    utterance_embedding)
from .sweep import (Condition, ExperimentPlan, F0ConditionFlags, SweepResult,
                    default_benchmark_plan, default_capacity_plan,
                    evaluate_model, plan_from_sections, plan_to_ini,
                    run_sweep)
from .vq import (Codebook, LossBreakdown, QuantizedBatch, codebook_perplexity,
                 codebook_pull_loss, combined_loss, commitment_loss,
                 dead_code_reseed, ema_update, load_codebook, quantize,
                 quantization_error, save_codebook)

__all__ = [
    "__version__",
    # autodiff
    "ShapeError", "Tape", "Tensor", "adam_state", "adam_step", "backward",
    "gradient_check",
    # config
    "ConfigError", "load_ini",
    # corpus
    "Corpus", "CorpusConfig", "FrameSequence", "SpeakerProfile",
    "generate_corpus", "generate_f0_track", "load_corpus", "save_corpus",
    "split_corpus",
    # f0
    "DegenerateTrackError", "F0Stats", "F0Track", "TrackFormatError",
    "add_awgn", "f0_stats", "linear_shift", "load_track", "measured_snr",
    "save_track",
    # metrics
    "MetricsReport", "ScoreSet", "assemble_report", "eer", "linkability",
    "load_scores", "parse_report", "report_to_text", "reports_to_csv",
    "save_scores",
    # model
    "BottleneckModel", "ModelConfig", "ProbeConfig", "SpeakerProbe",
    "TrainingDivergedError", "content_error_rate", "cosine_score",
    "extract_features", "forward", "load_model", "save_model", "score_trials",
    "subsample", "train", "train_speaker_probe", "utterance_embedding",
    # sweep
    "Condition", "ExperimentPlan", "F0ConditionFlags", "SweepResult",
    "default_benchmark_plan", "default_capacity_plan", "evaluate_model",
    "plan_from_sections", "plan_to_ini", "run_sweep",
    # vq
    "Codebook", "LossBreakdown", "QuantizedBatch", "codebook_perplexity",
    "codebook_pull_loss", "combined_loss", "commitment_loss",
    "dead_code_reseed", "ema_update", "load_codebook", "quantize",
    "quantization_error", "save_codebook",
]
