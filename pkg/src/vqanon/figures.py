"""Matplotlib renderers for the report paths: loss curves, score histograms,
and sweep trend panels. All figures are written straight to PNG files with the
Agg backend so runs are headless and byte-reproducible.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_DPI = 100


def render_loss_curves(history: list, path) -> None:
    """Loss components and codebook perplexity per training step."""
    steps = [rec.step for rec in history]
    fig, (ax_loss, ax_ppl) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(steps, [rec.task for rec in history], label="task")
    ax_loss.plot(steps, [rec.l_vq for rec in history], label="l_vq")
    ax_loss.plot(steps, [rec.l_vq_reg for rec in history], label="l_vq_reg")
    ax_loss.plot(steps, [rec.total for rec in history], label="total",
                 linestyle="--")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("loss")
    ax_loss.set_yscale("log")
    ax_loss.legend()
    ax_loss.set_title("training losses")
    ax_ppl.plot(steps, [rec.perplexity for rec in history], color="tab:green")
    ax_ppl.set_xlabel("step")
    ax_ppl.set_ylabel("codebook perplexity")
    ax_ppl.set_title("codebook usage")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_score_histogram(mated: np.ndarray, nonmated: np.ndarray, path,
                           title: str = "trial scores", bins: int = 50) -> None:
    """Overlaid mated/non-mated score distributions for one condition."""
    fig, ax = plt.subplots(figsize=(6, 4))
    lo = min(float(np.min(mated)), float(np.min(nonmated)))
    hi = max(float(np.max(mated)), float(np.max(nonmated)))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    ax.hist(nonmated, bins=edges, alpha=0.6, label="non-mated", density=True)
    ax.hist(mated, bins=edges, alpha=0.6, label="mated", density=True)
    ax.set_xlabel("cosine score")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_sweep_trends(reports: list, condition_order: list, path) -> None:
    """Per-condition metric panels: seed scatter plus the median line.

    ``reports`` holds MetricsReport records; conditions are plotted in the
    given order so bottleneck pressure reads left to right.
    """
    panels = [
        ("speaker_probe_accuracy", "speaker probe accuracy"),
        ("eer", "speaker EER"),
        ("content_error_rate", "content error rate"),
        ("d_sys", "linkability d_sys"),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    x = np.arange(len(condition_order))
    for ax, (attr, label) in zip(axes.ravel(), panels):
        medians = []
        for i, name in enumerate(condition_order):
            values = [getattr(r, attr) for r in reports if r.condition == name]
            ax.plot([i] * len(values), values, "o", color="tab:gray",
                    alpha=0.6, markersize=4)
            medians.append(np.median(values) if values else np.nan)
        ax.plot(x, medians, "-o", color="tab:blue")
        ax.set_xticks(x)
        ax.set_xticklabels(condition_order, rotation=30, ha="right")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
