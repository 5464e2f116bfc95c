"""Pitch-trajectory transforms: affine statistics matching and noise injection.

A track is a per-frame Hz trajectory with a voiced mask; unvoiced frames
carry the value 0 and are left untouched by every transform here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

F0_FLOOR_HZ = 1.0  # post-noise clipping floor; pitch cannot go non-positive


class TrackFormatError(ValueError):
    """A track file could not be parsed."""


class DegenerateTrackError(ValueError):
    """The track's statistics make the requested transform undefined."""


@dataclass
class F0Track:
    """Pitch trajectory in Hz with a voiced/unvoiced mask."""

    values: np.ndarray       # (T,) Hz, 0 where unvoiced
    voiced: np.ndarray       # (T,) bool
    frame_rate: float = 100.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.values.shape != self.voiced.shape or self.values.ndim != 1:
            raise ValueError("values and voiced mask must be equal-length 1-D")
        if np.any(self.values[~self.voiced] != 0.0):
            raise ValueError("unvoiced frames must carry value 0")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class F0Stats:
    """Mean and population std over voiced frames only."""

    mean: float
    std: float
    voiced_count: int


def f0_stats(track: F0Track) -> F0Stats:
    """Sample mean and population std (divide by n) of the voiced frames."""
    voiced = track.values[track.voiced]
    if voiced.size < 2:
        raise DegenerateTrackError(f"need >= 2 voiced frames, got {voiced.size}")
    return F0Stats(mean=float(voiced.mean()),
                   std=float(voiced.std()),  # population convention
                   voiced_count=int(voiced.size))


def linear_shift(track: F0Track, src: F0Stats, tgt: F0Stats) -> F0Track:
    """Affinely remap voiced frames so src statistics become tgt statistics.

    f' = (f - src.mean) / src.std * tgt.std + tgt.mean. When ``src`` was
    measured on this very track the output statistics equal ``tgt`` exactly
    (up to rounding); the transform is inverted by swapping src and tgt.
    """
    if src.std <= 0.0:
        raise DegenerateTrackError("source std must be positive for a linear shift")
    out = track.values.copy()
    v = track.voiced
    out[v] = (track.values[v] - src.mean) / src.std * tgt.std + tgt.mean
    return F0Track(values=out, voiced=v.copy(), frame_rate=track.frame_rate)


def add_awgn(track: F0Track, snr_db: float, rng: np.random.Generator,
             include_mean_power: bool = False) -> F0Track:
    """Add white Gaussian noise to voiced frames at a target SNR.

    Signal power defaults to the variance of the voiced trajectory (the mean
    carries target-speaker information after shifting, so it is excluded);
    ``include_mean_power`` switches to the raw mean square instead. Noisy
    values are clipped to at least 1 Hz; unvoiced frames are untouched.
    """
    voiced_vals = track.values[track.voiced]
    if voiced_vals.size < 2:
        raise DegenerateTrackError("need >= 2 voiced frames to add noise")
    if include_mean_power:
        power = float(np.mean(voiced_vals * voiced_vals))
    else:
        power = float(voiced_vals.var())
    if power <= 0.0:
        raise DegenerateTrackError("zero signal power; SNR is undefined")
    noise_std = float(np.sqrt(power / 10.0 ** (snr_db / 10.0)))
    out = track.values.copy()
    v = track.voiced
    out[v] = np.maximum(out[v] + rng.normal(0.0, noise_std, size=int(v.sum())),
                        F0_FLOOR_HZ)
    return F0Track(values=out, voiced=v.copy(), frame_rate=track.frame_rate)


def measured_snr(clean: F0Track, noisy: F0Track) -> float:
    """10 log10(signal variance / mean squared error) over voiced frames."""
    if clean.values.shape != noisy.values.shape \
            or np.any(clean.voiced != noisy.voiced):
        raise DegenerateTrackError("tracks must share the same voiced mask")
    v = clean.voiced
    signal = clean.values[v]
    if signal.size < 2:
        raise DegenerateTrackError("need >= 2 voiced frames")
    noise_power = float(np.mean((noisy.values[v] - signal) ** 2))
    if noise_power <= 0.0:
        raise DegenerateTrackError("zero noise energy; SNR is undefined")
    return float(10.0 * np.log10(signal.var() / noise_power))


# ---------------------------------------------------------------------------
# track files: one "value_hz voiced_flag" line per frame
# ---------------------------------------------------------------------------

def save_track(track: F0Track, path) -> None:
    lines = [f"{val:.17g} {int(flag)}"
             for val, flag in zip(track.values, track.voiced)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_track(path, frame_rate: float = 100.0) -> F0Track:
    values, voiced = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise TrackFormatError(f"{path}:{lineno}: expected 'value_hz voiced_flag'")
            try:
                val = float(parts[0])
                flag = int(parts[1])
            except ValueError as exc:
                raise TrackFormatError(f"{path}:{lineno}: {exc}") from None
            if flag not in (0, 1):
                raise TrackFormatError(f"{path}:{lineno}: voiced flag must be 0 or 1")
            values.append(val)
            voiced.append(bool(flag))
    if not values:
        raise TrackFormatError(f"{path}: empty track")
    try:
        return F0Track(values=np.array(values), voiced=np.array(voiced),
                       frame_rate=frame_rate)
    except ValueError as exc:
        raise TrackFormatError(f"{path}: {exc}") from None
