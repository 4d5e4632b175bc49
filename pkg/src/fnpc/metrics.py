"""Objective speech quality measures: SegSNR, LLR, WSS, and spectrograms."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz

from fnpc.dsp import frame_signal, hamming

SEGSNR_FLOOR = -10.0
SEGSNR_CEIL = 35.0
LLR_CEIL = 2.0
SPECTROGRAM_FLOOR_DB = -120.0

# Critical-band centres and bandwidths (Hz) of the Klatt WSS measure.
WSS_CENTER_HZ = np.array([
    50.0, 120.0, 190.0, 260.0, 330.0, 400.0, 470.0, 540.0, 617.372, 703.378,
    798.717, 904.128, 1020.38, 1148.30, 1288.72, 1442.54, 1610.70, 1794.16,
    1993.93, 2211.08, 2446.71, 2701.97, 2978.04, 3276.17, 3597.63,
])
WSS_BANDWIDTH_HZ = np.array([
    70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 77.3724, 86.0056, 95.3398,
    105.411, 116.256, 127.914, 140.423, 153.823, 168.154, 183.457, 199.776,
    217.153, 235.631, 255.255, 276.072, 298.126, 321.465, 346.136,
])
WSS_K_MAX = 20.0
WSS_K_LOCMAX = 1.0


@dataclass
class QualityReport:
    segsnr_db: float
    llr: float
    wss: float
    per_frame_segsnr: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "segsnr_db": self.segsnr_db,
            "llr": self.llr,
            "wss": self.wss,
            "frames": len(self.per_frame_segsnr),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _pair(reference, test):
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape or ref.ndim != 1:
        raise ValueError(f"length mismatch: reference {ref.shape} vs test {tst.shape}")
    return ref, tst


def segsnr(reference, test, seg_len: int = 256):
    """Mean segmental SNR in dB over non-overlapping segments.

    Each segment's SNR is clamped to [-10, 35] dB; segments with zero
    reference energy are skipped. Returns ``(mean_db, per_segment)``.
    """
    ref, tst = _pair(reference, test)
    if ref.size < seg_len:
        raise ValueError(f"signals shorter than one segment ({ref.size} < {seg_len})")
    count = ref.size // seg_len
    r = ref[: count * seg_len].reshape(count, seg_len)
    e = r - tst[: count * seg_len].reshape(count, seg_len)
    sig = np.sum(r**2, axis=1)
    err = np.sum(e**2, axis=1)
    keep = sig > 0
    with np.errstate(divide="ignore"):
        snr = np.where(err > 0, 10.0 * np.log10(sig / np.where(err > 0, err, 1.0)), SEGSNR_CEIL)
    per = np.clip(snr[keep], SEGSNR_FLOOR, SEGSNR_CEIL)
    if per.size == 0:
        raise ValueError("reference is silent in every segment")
    return float(np.mean(per)), per


@dataclass(frozen=True)
class LpcCoeffs:
    order: int
    a: np.ndarray  # a[0] == 1; A(z) = sum a[k] z^-k
    error: float = 0.0  # final prediction error power


def autocorrelation(x, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.array([x[: x.size - k] @ x[k:] for k in range(max_lag + 1)])


def levinson(r, order: int) -> LpcCoeffs:
    """Levinson-Durbin recursion on autocorrelation lags ``r[0..order]``."""
    r = np.asarray(r, dtype=np.float64)
    if not r[0] > 0:
        raise ValueError("degenerate autocorrelation: zero energy")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        k = -(r[i] + a[1:i] @ r[i - 1 : 0 : -1]) / err
        if not abs(k) < 1.0:
            raise ValueError(f"degenerate autocorrelation: reflection coefficient {k:.6g} at order {i}")
        a[1:i] = a[1:i] + k * a[i - 1 : 0 : -1]
        a[i] = k
        err *= 1.0 - k * k
    return LpcCoeffs(order, a, float(err))


def lpc(segment, order: int) -> LpcCoeffs:
    """Autocorrelation-method LPC of a segment (no window applied here)."""
    x = np.asarray(segment, dtype=np.float64)
    if x.size <= order:
        raise ValueError(f"segment length {x.size} must exceed LPC order {order}")
    return levinson(autocorrelation(x, order), order)


def llr_frames(reference, test, frame: int = 256, hop: int = 128, order: int = 10) -> np.ndarray:
    """Per-frame log-likelihood ratios (clamped to [0, 2]); degenerate frames dropped."""
    ref, tst = _pair(reference, test)
    count = 1 + (ref.size - frame) // hop
    win = hamming(frame)
    out = []
    for i in range(count):
        r_seg = ref[i * hop : i * hop + frame] * win
        t_seg = tst[i * hop : i * hop + frame] * win
        try:
            r_lags = autocorrelation(r_seg, order)
            a_r = levinson(r_lags, order).a
            a_t = lpc(t_seg, order).a
        except ValueError:
            continue
        rr = toeplitz(r_lags)
        num = a_t @ rr @ a_t
        den = a_r @ rr @ a_r
        out.append(np.clip(np.log(num / den), 0.0, LLR_CEIL))
    return np.array(out)


def llr(reference, test, frame: int = 256, hop: int = 128, order: int = 10) -> float:
    """Mean log-likelihood ratio between LPC models of reference and test."""
    values = llr_frames(reference, test, frame, hop, order)
    if values.size == 0:
        raise ValueError("every frame is degenerate; LLR undefined")
    return float(np.mean(values))


def critical_band_filters(n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters, shape (25, n_fft // 2 + 1), on rfft bin frequencies.

    Each triangle peaks at the band centre and reaches zero one bandwidth away.
    """
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    dist = np.abs(freqs[None, :] - WSS_CENTER_HZ[:, None]) / WSS_BANDWIDTH_HZ[:, None]
    return np.maximum(1.0 - dist, 0.0)


def _band_db(frames, filters):
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    return 10.0 * np.log10(np.maximum(power @ filters.T, 1e-10))


def _nearest_peaks(energy, slope):
    """Level of the nearest local peak for each of the first 24 bands."""
    nb = slope.size
    peaks = np.empty(nb)
    for i in range(nb):
        n = i
        if slope[i] > 0:
            while n < nb and slope[n] > 0:
                n += 1
            peaks[i] = energy[n]
        else:
            while n >= 0 and slope[n] <= 0:
                n -= 1
            peaks[i] = energy[n + 1]
    return peaks


def _wss_weights(energy, slope):
    e = energy[:-1]
    w_max = WSS_K_MAX / (WSS_K_MAX + energy.max() - e)
    w_loc = WSS_K_LOCMAX / (WSS_K_LOCMAX + _nearest_peaks(energy, slope) - e)
    return w_max * w_loc


def wss_frames(reference, test, frame: int = 256, hop: int = 128, sample_rate: int = 16000) -> np.ndarray:
    ref, tst = _pair(reference, test)
    if ref.size < frame:
        raise ValueError(f"signals shorter than one frame ({ref.size} < {frame})")
    count = 1 + (ref.size - frame) // hop
    win = hamming(frame)
    idx = np.arange(count)[:, None] * hop + np.arange(frame)[None, :]
    filters = critical_band_filters(frame, sample_rate)
    e_ref = _band_db(ref[idx] * win, filters)
    e_tst = _band_db(tst[idx] * win, filters)
    out = np.empty(count)
    for i in range(count):
        s_ref = np.diff(e_ref[i])
        s_tst = np.diff(e_tst[i])
        w = 0.5 * (_wss_weights(e_ref[i], s_ref) + _wss_weights(e_tst[i], s_tst))
        out[i] = np.sum(w * (s_ref - s_tst) ** 2) / np.sum(w)
    return out


def wss(reference, test, frame: int = 256, hop: int = 128, sample_rate: int = 16000) -> float:
    """Mean Klatt weighted spectral slope distance."""
    return float(np.mean(wss_frames(reference, test, frame, hop, sample_rate)))


def evaluate(reference, test, sample_rate: int = 16000, frame: int = 256, hop: int = 128) -> QualityReport:
    snr, per = segsnr(reference, test, frame)
    return QualityReport(
        segsnr_db=snr,
        llr=llr(reference, test, frame, hop),
        wss=wss(reference, test, frame, hop, sample_rate),
        per_frame_segsnr=per.tolist(),
    )


def spectrogram(x, frame: int = 256, hop: int = 128) -> np.ndarray:
    """dB magnitude spectrogram, shape ``(frame // 2 + 1, num_frames)``.

    Only full frames are analysed; values are floored at -120 dB.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < frame:
        raise ValueError(f"signal shorter than one frame ({x.size} < {frame})")
    count = 1 + (x.size - frame) // hop
    frames = frame_signal(x[: (count - 1) * hop + frame], frame, hop)[:count]
    mag = np.abs(np.fft.rfft(frames, axis=1))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return np.maximum(db, SPECTROGRAM_FLOOR_DB).T


def write_spectrogram_csv(spec: np.ndarray, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(range(spec.shape[1]))
        for row in spec:
            writer.writerow(f"{v:.6g}" for v in row)
