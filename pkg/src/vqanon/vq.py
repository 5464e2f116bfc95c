"""Vector-quantization bottleneck: codebook, losses, EMA learning.

Latent frames are replaced by their nearest prototype (squared Euclidean
distance, ties to the lowest index). Prototypes learn either through an
exponential-moving-average rule applied outside the optimizer (default) or
through the dictionary-pull loss when gradient learning is selected.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, gather_rows, sum_squared_diff

CODEBOOK_MAGIC = b"VQCB0001"

DEFAULT_DECAY = 0.99
DEFAULT_LAPLACE_EPS = 1e-5
DEFAULT_RESEED_THRESHOLD = 1e-3
DEFAULT_BETA = 0.25


@dataclass
class Codebook:
    """V learned prototype rows of dimension D plus EMA accumulators."""

    prototypes: np.ndarray        # (V, D)
    ema_cluster_size: np.ndarray  # (V,)
    ema_embed_sum: np.ndarray     # (V, D)
    decay: float = DEFAULT_DECAY
    laplace_eps: float = DEFAULT_LAPLACE_EPS

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        self.ema_cluster_size = np.asarray(self.ema_cluster_size, dtype=np.float64)
        self.ema_embed_sum = np.asarray(self.ema_embed_sum, dtype=np.float64)
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if self.laplace_eps <= 0.0:
            raise ValueError("laplace_eps must be positive")
        v, d = self.prototypes.shape
        if self.ema_cluster_size.shape != (v,) or self.ema_embed_sum.shape != (v, d):
            raise ShapeError("accumulator shapes do not match prototypes")

    @property
    def size(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    @classmethod
    def from_latents(cls, latents: np.ndarray, size: int,
                     rng: np.random.Generator | None = None,
                     decay: float = DEFAULT_DECAY,
                     laplace_eps: float = DEFAULT_LAPLACE_EPS) -> "Codebook":
        """Initialize prototypes from ``size`` distinct rows of a latent batch."""
        latents = np.asarray(latents, dtype=np.float64)
        if latents.shape[0] < size:
            raise ValueError(f"need at least {size} latent rows, got {latents.shape[0]}")
        if rng is None:
            picked = np.arange(size)
        else:
            picked = rng.choice(latents.shape[0], size=size, replace=False)
        protos = latents[picked].copy()
        # unit pseudo-counts keep sum/count consistent with the prototypes,
        # so the first update interpolates instead of rescaling them
        return cls(prototypes=protos,
                   ema_cluster_size=np.ones(size),
                   ema_embed_sum=protos.copy(),
                   decay=decay, laplace_eps=laplace_eps)

    @classmethod
    def random_init(cls, size: int, dim: int, rng: np.random.Generator,
                    scale: float = 0.5,
                    decay: float = DEFAULT_DECAY,
                    laplace_eps: float = DEFAULT_LAPLACE_EPS) -> "Codebook":
        """Placeholder prototypes for a model that has not seen data yet."""
        protos = rng.normal(0.0, scale, size=(size, dim))
        return cls(prototypes=protos,
                   ema_cluster_size=np.ones(size),
                   ema_embed_sum=protos.copy(),
                   decay=decay, laplace_eps=laplace_eps)


@dataclass
class QuantizedBatch:
    """Nearest-prototype replacement of a batch of continuous latents."""

    q: np.ndarray        # (J, D), rows copied bit-for-bit from the codebook
    indices: np.ndarray  # (J,)
    h: np.ndarray        # (J, D), the continuous latents that were quantized


def quantize(h: np.ndarray, codebook: Codebook) -> QuantizedBatch:
    """Replace each latent row by its nearest prototype (lowest index on ties)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != codebook.dim:
        raise ShapeError(f"latents have shape {h.shape}, codebook dim is {codebook.dim}")
    if h.shape[0] < 1:
        raise ShapeError("need at least one latent row")
    e = codebook.prototypes
    # ||h - e||^2 expanded; argmin returns the first (lowest) index on ties
    d = (h * h).sum(axis=1, keepdims=True) - 2.0 * (h @ e.T) + (e * e).sum(axis=1)
    indices = np.argmin(d, axis=1)
    return QuantizedBatch(q=e[indices], indices=indices, h=h)


def quantization_error(h: np.ndarray, q: np.ndarray) -> float:
    """Total squared distance between latents and their prototypes."""
    h = np.asarray(h, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if h.shape != q.shape:
        raise ShapeError(f"shape mismatch {h.shape} vs {q.shape}")
    diff = h - q
    return float(np.sum(diff * diff))


def commitment_loss(h: Tensor, q_values: np.ndarray) -> Tensor:
    """Sum ||h_j - sg[q_j]||^2 as a tape op; gradient reaches h only."""
    return sum_squared_diff(h, q_values)


def codebook_pull_loss(prototypes: Tensor, indices: np.ndarray,
                       h_values: np.ndarray) -> Tensor:
    """Sum ||sg[h_j] - q_j||^2 as a tape op; gradient reaches the prototypes only.

    Used only when gradient-based codebook learning is selected instead of
    the EMA rule.
    """
    picked = gather_rows(prototypes, indices)
    return sum_squared_diff(picked, h_values)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-step loss components; total reconstructs exactly from the parts."""

    task_loss: float
    l_vq: float
    l_vq_reg: float
    beta: float
    total: float


def combined_loss(task: float, l_vq: float, l_reg: float,
                  beta: float = DEFAULT_BETA) -> LossBreakdown:
    """task + l_vq + beta * l_reg, recorded term by term."""
    if beta < 0.0:
        raise ValueError("beta must be non-negative")
    if l_vq < 0.0 or l_reg < 0.0:
        raise ValueError("quantization losses cannot be negative")
    total = task + l_vq + beta * l_reg
    return LossBreakdown(task_loss=task, l_vq=l_vq, l_vq_reg=l_reg,
                         beta=beta, total=total)


def ema_update(codebook: Codebook, h: np.ndarray, indices: np.ndarray) -> None:
    """Fold one batch of assignments into the EMA accumulators, in place.

    Per prototype i with n_i assigned rows summing to m_i:
        cluster_i <- decay * cluster_i + (1 - decay) * n_i
        sum_i     <- decay * sum_i     + (1 - decay) * m_i
    then with N = sum(cluster), Laplace-smoothed counts
        smoothed_i = (cluster_i + eps) / (N + V * eps) * N
    and prototypes are rewritten as sum_i / smoothed_i.
    """
    h = np.asarray(h, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    v, d = codebook.prototypes.shape
    if h.shape[1] != d:
        raise ShapeError(f"latents dim {h.shape[1]} != codebook dim {d}")
    if indices.size and (indices.min() < 0 or indices.max() >= v):
        raise ValueError("assignment index out of range")

    counts = np.bincount(indices, minlength=v).astype(np.float64)
    sums = np.zeros_like(codebook.ema_embed_sum)
    np.add.at(sums, indices, h)

    g = codebook.decay
    codebook.ema_cluster_size = g * codebook.ema_cluster_size + (1.0 - g) * counts
    codebook.ema_embed_sum = g * codebook.ema_embed_sum + (1.0 - g) * sums

    n = codebook.ema_cluster_size.sum()
    smoothed = (codebook.ema_cluster_size + codebook.laplace_eps) \
        / (n + v * codebook.laplace_eps) * n
    codebook.prototypes = codebook.ema_embed_sum / smoothed[:, None]


def dead_code_reseed(codebook: Codebook, h: np.ndarray, threshold: float,
                     rng: np.random.Generator) -> int:
    """Replace starved prototypes with random latent rows; returns how many.

    A prototype whose EMA cluster size fell below ``threshold`` is reseeded
    from a uniformly drawn row of ``h`` and its accumulators reset to
    (1, that row).
    """
    if threshold < 0.0:
        raise ValueError("threshold must be non-negative")
    h = np.asarray(h, dtype=np.float64)
    dead = np.flatnonzero(codebook.ema_cluster_size < threshold)
    for i in dead:
        row = h[int(rng.integers(0, h.shape[0]))]
        codebook.prototypes[i] = row
        codebook.ema_cluster_size[i] = 1.0
        codebook.ema_embed_sum[i] = row
    return int(dead.size)


def codebook_perplexity(indices: np.ndarray, size: int) -> float:
    """exp(entropy) of the empirical prototype-usage distribution, in [1, V]."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("need at least one index")
    if indices.min() < 0 or indices.max() >= size:
        raise ValueError("index out of range")
    counts = np.bincount(indices, minlength=size).astype(np.float64)
    p = counts / counts.sum()
    nz = p[p > 0.0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_codebook(codebook: Codebook, path) -> None:
    """Binary dump with an 8-byte magic/version header; round-trips exactly."""
    with open(path, "wb") as fh:
        fh.write(codebook_to_bytes(codebook))


def load_codebook(path) -> Codebook:
    with open(path, "rb") as fh:
        return codebook_from_bytes(fh.read())


def codebook_to_bytes(codebook: Codebook) -> bytes:
    v, d = codebook.prototypes.shape
    head = CODEBOOK_MAGIC + struct.pack("<QQdd", v, d,
                                        codebook.decay, codebook.laplace_eps)
    return (head
            + codebook.prototypes.tobytes()
            + codebook.ema_cluster_size.tobytes()
            + codebook.ema_embed_sum.tobytes())


def codebook_from_bytes(blob: bytes) -> Codebook:
    if blob[:8] != CODEBOOK_MAGIC:
        raise ValueError("not a codebook dump (bad magic)")
    v, d, decay, eps = struct.unpack_from("<QQdd", blob, 8)
    off = 8 + struct.calcsize("<QQdd")
    protos = np.frombuffer(blob, dtype=np.float64, count=v * d, offset=off).reshape(v, d)
    off += v * d * 8
    cluster = np.frombuffer(blob, dtype=np.float64, count=v, offset=off)
    off += v * 8
    sums = np.frombuffer(blob, dtype=np.float64, count=v * d, offset=off).reshape(v, d)
    return Codebook(prototypes=protos.copy(), ema_cluster_size=cluster.copy(),
                    ema_embed_sum=sums.copy(), decay=decay, laplace_eps=eps)
