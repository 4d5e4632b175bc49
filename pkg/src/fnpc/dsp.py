"""Signal conditioning: framing, overlap-add, DCT-II, normalization, AWGN."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

WINDOW_FLOOR = 1e-8


@dataclass(frozen=True)
class NormStats:
    """Global mean and standard deviation used to standardize samples."""

    mean: float
    std_dev: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std_dev)):
            raise ValueError("normalization stats must be finite")
        if self.std_dev <= 0:
            raise ValueError(f"std_dev must be positive, got {self.std_dev}")


@lru_cache(maxsize=16)
def hamming(n: int) -> np.ndarray:
    """Symmetric Hamming window 0.54 - 0.46 cos(2 pi k / (n - 1))."""
    k = np.arange(n)
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))
    w.flags.writeable = False
    return w


def num_frames(length: int, frame_len: int, hop: int) -> int:
    """Frames produced by `frame_signal` for a signal of `length` samples.

    Offsets run 0, hop, 2*hop, ... up to and including the last offset that
    leaves at most `hop` samples uncovered, so the final frame is always at
    least partially zero-padded.
    """
    if length < frame_len:
        raise ValueError(f"signal too short: {length} samples < frame length {frame_len}")
    return (length - hop) // hop + 1


def frame_signal(x, frame_len: int = 256, hop: int = 128, window: bool = True) -> np.ndarray:
    """Split `x` into overlapping frames, shape ``(num_frames, frame_len)``.

    Each row is multiplied by the Hamming window unless ``window=False``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D signal")
    count = num_frames(x.size, frame_len, hop)
    padded = np.zeros((count - 1) * hop + frame_len)
    padded[: x.size] = x
    idx = np.arange(count)[:, None] * hop + np.arange(frame_len)[None, :]
    frames = padded[idx]
    if window:
        frames *= hamming(frame_len)
    return frames


def overlap_add(frames, hop: int = 128, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of `frame_signal` (windowed frames).

    ``out[t] = sum(frames[t - off]) / max(sum(window[t - off]), 1e-8)``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("overlap_add needs a non-empty 2-D array of frames")
    count, frame_len = frames.shape
    total = (count - 1) * hop + frame_len
    acc = np.zeros(total)
    wsum = np.zeros(total)
    win = hamming(frame_len)
    for i in range(count):
        off = i * hop
        acc[off : off + frame_len] += frames[i]
        wsum[off : off + frame_len] += win
    out = acc / np.maximum(wsum, WINDOW_FLOOR)
    if length is not None:
        out = out[:length]
    return out


@lru_cache(maxsize=16)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix G with ``Y = G @ x``.

    Row k (0-based) is sqrt(2/n) cos(pi (2m + 1) k / (2n)) for k > 0 and
    1/sqrt(n) for k = 0.
    """
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    g = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    g[0, :] = 1.0 / np.sqrt(n)
    g.flags.writeable = False
    return g


def dct_forward(frames) -> np.ndarray:
    """Orthonormal DCT-II along the last axis."""
    frames = np.asarray(frames, dtype=np.float64)
    return frames @ dct_matrix(frames.shape[-1]).T


def dct_inverse(coeffs) -> np.ndarray:
    """Inverse of `dct_forward` (transpose of the orthonormal matrix)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    return coeffs @ dct_matrix(coeffs.shape[-1])


def compute_norm_stats(x) -> NormStats:
    """Population mean and standard deviation over every sample of `x`."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 samples for normalization stats")
    mu = float(np.mean(x))
    var = float(np.mean((x - mu) ** 2))
    if var <= 0.0:
        raise ValueError("zero variance: cannot normalize a constant signal")
    return NormStats(mu, float(np.sqrt(var)))


def normalize(x, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std_dev


def denormalize(x, stats: NormStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std_dev + stats.mean


def add_awgn(x, snr_db: float, seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise at an exact whole-signal SNR.

    The drawn noise is rescaled to the target power, so the measured
    ``10 log10(P_signal / P_noise)`` equals `snr_db` up to rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    p_signal = np.mean(x**2)
    if not p_signal > 0:
        raise ValueError("cannot add noise at a given SNR to an all-zero signal")
    noise = np.random.default_rng(seed).standard_normal(x.size)
    p_target = p_signal / 10.0 ** (snr_db / 10.0)
    noise *= np.sqrt(p_target / np.mean(noise**2))
    return x + noise
