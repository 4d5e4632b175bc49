"""Audio and label ingestion: WAV I/O, TIMIT .phn parsing, mapping datasets."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from fnpc import dsp
from fnpc.config import CodecConfig, Domain


class WavFormatError(ValueError):
    pass


class PhnFormatError(ValueError):
    pass


class Audio(NamedTuple):
    samples: np.ndarray
    sample_rate: int


def read_wav(path) -> Audio:
    """Read a mono 16-bit PCM RIFF WAV; samples scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate, count = (
                fh.getnchannels(),
                fh.getsampwidth(),
                fh.getframerate(),
                fh.getnframes(),
            )
            if width != 2:
                raise WavFormatError(
                    f"{path}: unsupported encoding ({8 * width}-bit samples, only 16-bit PCM is read)"
                )
            if channels != 1:
                raise WavFormatError(f"{path}: expected mono audio, found {channels} channels")
            raw = fh.readframes(count)
    except wave.Error as exc:
        # the stdlib reader rejects non-PCM format tags (e.g. IEEE float) here
        raise WavFormatError(f"{path}: unsupported encoding or malformed header ({exc})") from None
    except EOFError:
        raise WavFormatError(f"{path}: malformed header (file truncated)") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Audio(samples, rate)


def write_wav(samples, path, sample_rate: int = 16000) -> None:
    """Write mono 16-bit PCM, rounding to nearest and clipping to the int16 range."""
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot write non-finite samples")
    pcm = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(pcm.tobytes())


@dataclass(frozen=True)
class PhoneSegment:
    start_sample: int
    end_sample: int
    label: str


def parse_phn_lines(lines: Iterable[str], source: str = "<phn>") -> list[PhoneSegment]:
    segments = []
    prev_start = -1
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise PhnFormatError(f"{source}: expected 'start end label' at line {lineno}, got {line.strip()!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise PhnFormatError(f"{source}: non-numeric bounds at line {lineno}") from None
        if start < 0:
            raise PhnFormatError(f"{source}: negative start at line {lineno}")
        if start >= end:
            raise PhnFormatError(f"{source}: start >= end at line {lineno}")
        if start < prev_start:
            raise PhnFormatError(f"{source}: out-of-order segment at line {lineno}")
        prev_start = start
        segments.append(PhoneSegment(start, end, parts[2]))
    return segments


def parse_phn(path) -> list[PhoneSegment]:
    """Parse a TIMIT-style .phn file (one ``start end label`` per line)."""
    with open(path) as fh:
        return parse_phn_lines(fh, str(path))


def extract_segments(samples, segments, labels) -> list[np.ndarray]:
    """Sub-signals of the segments whose label is in `labels`, in order."""
    x = np.asarray(samples)
    wanted = set(labels)
    out = []
    for seg in segments:
        if seg.end_sample > x.size:
            raise ValueError(
                f"segment {seg.label!r} [{seg.start_sample}, {seg.end_sample}) exceeds signal length {x.size}"
            )
        if seg.label in wanted:
            out.append(x[seg.start_sample : seg.end_sample].copy())
    return out


@dataclass(frozen=True)
class ManifestEntry:
    audio: Path
    labels: Path | None = None


def read_manifest(path) -> list[ManifestEntry]:
    """Read ``audio`` or ``audio<TAB>labels`` lines; relative paths resolve against the manifest."""
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) > 2:
            raise ValueError(f"{path}: too many fields at line {lineno}")
        audio = base / parts[0].strip()
        labels = base / parts[1].strip() if len(parts) == 2 and parts[1].strip() else None
        entries.append(ManifestEntry(audio, labels))
    if not entries:
        raise ValueError(f"{path}: manifest lists no audio files")
    return entries


def load_corpus(entries) -> list[Audio]:
    audios = []
    for entry in entries:
        try:
            audios.append(read_wav(entry.audio))
        except (OSError, WavFormatError) as exc:
            raise ValueError(f"cannot read corpus file {entry.audio}: {exc}") from None
    return audios


def domain_stream(signals, domain: Domain, frame_len: int = 256, hop: int = 128) -> np.ndarray:
    """Concatenate signals (TIME) or their windowed DCT frames (DCT) into one stream."""
    domain = Domain.parse(domain)
    if domain is Domain.TIME:
        return np.concatenate([np.asarray(s, dtype=np.float64) for s in signals])
    coeffs = [dsp.dct_forward(dsp.frame_signal(s, frame_len, hop)).ravel() for s in signals]
    return np.concatenate(coeffs)


def build_mapping_dataset(manifest, cfg: CodecConfig):
    """Normalized mapping-phase stream and the stats used to normalize it.

    `manifest` is a manifest path or a list of ManifestEntry.
    """
    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    if not entries:
        raise ValueError("empty manifest")
    audios = load_corpus(entries)
    for a, entry in zip(audios, entries):
        if a.sample_rate != cfg.sample_rate:
            raise ValueError(f"{entry.audio}: sample rate {a.sample_rate} differs from {cfg.sample_rate}")
    stream = domain_stream([a.samples for a in audios], cfg.domain, cfg.frame_len, cfg.hop)
    stats = dsp.compute_norm_stats(stream)
    return dsp.normalize(stream, stats), stats
