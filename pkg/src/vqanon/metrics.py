"""Privacy metrics over verification trial scores: EER and linkability d_sys.

Both metrics are score-agnostic: they consume two lists of trial scores
(same-speaker and different-speaker) and nothing else. Higher EER and lower
d_sys both mean the trials are harder to link, i.e. more private.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError

DEFAULT_NUM_BINS = 100
_SMOOTHING_EPS = 1e-12

REPORT_CSV_HEADER = "condition,V,content_err,probe_acc,eer,d_sys,seed"


@dataclass
class ScoreSet:
    """Mated (same-speaker) and non-mated (different-speaker) trial scores."""

    mated: np.ndarray
    nonmated: np.ndarray

    def __post_init__(self):
        self.mated = np.asarray(self.mated, dtype=np.float64).reshape(-1)
        self.nonmated = np.asarray(self.nonmated, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(self.mated))
                and np.all(np.isfinite(self.nonmated))):
            raise ValueError("trial scores must be finite")


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR crosses FRR.

    Thresholds sweep the sorted unique scores (plus one virtual point past the
    maximum where FAR=0, FRR=1). FAR(t) counts non-mated scores >= t, FRR(t)
    counts mated scores < t; FAR - FRR is non-increasing, and the EER is read
    at its zero, linearly interpolated between the adjacent operating points.
    """
    if scores.mated.size == 0 or scores.nonmated.size == 0:
        raise ValueError("both score lists must be nonempty")
    mated = np.sort(scores.mated)
    nonmated = np.sort(scores.nonmated)
    thresholds = np.unique(np.concatenate([mated, nonmated]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    far = 1.0 - np.searchsorted(nonmated, thresholds, side="left") / nonmated.size
    frr = np.searchsorted(mated, thresholds, side="left") / mated.size
    diff = far - frr
    idx = int(np.argmax(diff <= 0.0))
    if diff[idx] == 0.0 or idx == 0:
        return float(0.5 * (far[idx] + frr[idx])), float(thresholds[idx])
    k = idx - 1
    t = diff[k] / (diff[k] - diff[k + 1])
    value = far[k] + t * (far[k + 1] - far[k])
    threshold = thresholds[k] + t * (thresholds[k + 1] - thresholds[k])
    return float(value), float(threshold)


def linkability(scores: ScoreSet,
                num_bins: int = DEFAULT_NUM_BINS) -> tuple[float, np.ndarray]:
    """Global linkability d_sys and the per-bin local measure D(s).

    Score densities conditioned on mated/non-mated are estimated by equal-width
    histograms over the common score range with a tiny smoothing mass per bin.
    With equal priors, D(s) = max(0, 2 LR/(1+LR) - 1) and d_sys is its
    expectation under the mated density. 0 = unlinkable, 1 = fully linkable.
    """
    if scores.mated.size == 0 or scores.nonmated.size == 0:
        raise ValueError("both score lists must be nonempty")
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    pooled = np.concatenate([scores.mated, scores.nonmated])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        # all scores identical in both lists: no linkage evidence anywhere
        return 0.0, np.zeros(num_bins)
    edges = np.linspace(lo, hi, num_bins + 1)
    counts_m, _ = np.histogram(scores.mated, bins=edges)
    counts_n, _ = np.histogram(scores.nonmated, bins=edges)
    p_m = (counts_m + _SMOOTHING_EPS) / (scores.mated.size
                                         + num_bins * _SMOOTHING_EPS)
    p_n = (counts_n + _SMOOTHING_EPS) / (scores.nonmated.size
                                         + num_bins * _SMOOTHING_EPS)
    lr = p_m / p_n
    local = np.maximum(0.0, 2.0 * lr / (1.0 + lr) - 1.0)
    d_sys = float(np.sum(local * p_m))
    return d_sys, local


def _check_fraction(name, value):
    if not np.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class MetricsReport:
    """One evaluated condition: utility, attacker accuracy, EER, linkability."""

    condition: str
    codebook_size: int | None
    content_error_rate: float
    speaker_probe_accuracy: float
    eer: float
    d_sys: float
    config_echo: str
    seed: int

    def __post_init__(self):
        if not self.condition or any(c in self.condition for c in ",\n"):
            raise ValueError("condition label must be nonempty, no comma/newline")
        if "\n" in self.config_echo:
            raise ValueError("config echo must be a single line")
        _check_fraction("content_error_rate", self.content_error_rate)
        _check_fraction("speaker_probe_accuracy", self.speaker_probe_accuracy)
        _check_fraction("eer", self.eer)
        _check_fraction("d_sys", self.d_sys)
        if self.codebook_size is not None and self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2 or None")


def assemble_report(condition: str, codebook_size: int | None, utility: float,
                    probe_acc: float, eer_value: float, d_sys: float,
                    config_echo: str, seed: int) -> MetricsReport:
    """Validated immutable record of one condition's metrics."""
    return MetricsReport(condition=condition, codebook_size=codebook_size,
                         content_error_rate=utility,
                         speaker_probe_accuracy=probe_acc, eer=eer_value,
                         d_sys=d_sys, config_echo=config_echo, seed=seed)


def report_to_text(report: MetricsReport) -> str:
    """Single-condition structured text record; parse_report inverts exactly."""
    v = "none" if report.codebook_size is None else str(report.codebook_size)
    lines = [
        f"condition {report.condition}",
        f"codebook_size {v}",
        f"content_error_rate {report.content_error_rate:.17g}",
        f"speaker_probe_accuracy {report.speaker_probe_accuracy:.17g}",
        f"eer {report.eer:.17g}",
        f"d_sys {report.d_sys:.17g}",
        f"seed {report.seed}",
        f"config {report.config_echo}",
    ]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> MetricsReport:
    fields = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(" ")
        fields[key] = value
    try:
        v = fields["codebook_size"]
        return MetricsReport(
            condition=fields["condition"],
            codebook_size=None if v == "none" else int(v),
            content_error_rate=float(fields["content_error_rate"]),
            speaker_probe_accuracy=float(fields["speaker_probe_accuracy"]),
            eer=float(fields["eer"]),
            d_sys=float(fields["d_sys"]),
            config_echo=fields.get("config", ""),
            seed=int(fields["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed report record ({exc})") from None


def report_csv_row(report: MetricsReport) -> str:
    v = "none" if report.codebook_size is None else str(report.codebook_size)
    return (f"{report.condition},{v},{report.content_error_rate:.17g},"
            f"{report.speaker_probe_accuracy:.17g},{report.eer:.17g},"
            f"{report.d_sys:.17g},{report.seed}")


def reports_to_csv(reports: list) -> str:
    lines = [REPORT_CSV_HEADER]
    lines.extend(report_csv_row(r) for r in reports)
    return "\n".join(lines) + "\n"


def save_scores(path, scores: np.ndarray) -> None:
    """Score file: one score per line, 17 significant digits."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    Path(path).write_text(
        "".join(f"{s:.17g}\n" for s in scores), encoding="utf-8")


def load_scores(path) -> np.ndarray:
    try:
        lines = Path(path).read_text(encoding="utf-8").split()
        return np.array([float(tok) for tok in lines])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed score file ({exc})") from None
