"""Encoder/decoder orchestration and the binary model and stream formats.

Both domains run the same stages; only the per-frame transform differs::

    encode: frame -> transform -> normalize -> code
    decode: predict -> denormalize -> inverse transform -> overlap-add

File layouts (little-endian throughout):

model file (``.fnpm``)
    magic "FNPM", version u16, domain u8, N u16, hop u16, L u16, M u16,
    sample_rate u32, mean f64, std f64, hidden_bias (M-1) x f32,
    w1 (M-1)*L x f32 row-major

stream file (``.fnpc``)
    magic "FNPC", version u16, model fingerprint u64, domain u8, N u16,
    hop u16, L u16, M u16, sample_rate u32, original_length u64,
    frame_count u32; then per frame: index u32, seed L x f32,
    w2 (M-1) x f32, b2 f32
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fnpc import dsp
from fnpc.config import CodecConfig, Domain, PredictorConfig
from fnpc.predictor import FrameCode, MappingModel, code_frame, predict_frame

FORMAT_VERSION = 1
MODEL_MAGIC = b"FNPM"
STREAM_MAGIC = b"FNPC"
MODEL_HEADER = struct.Struct("<4sHBHHHHIdd")
STREAM_HEADER = struct.Struct("<4sHQBHHHHIQI")

ENCODE_STAGES = ("frame", "transform", "normalize", "code")
DECODE_STAGES = ("predict", "denormalize", "inverse_transform", "overlap_add")


class FormatError(ValueError):
    """Malformed, truncated or incompatible model/stream file."""


class ModelMismatchError(ValueError):
    """Stream was encoded with a different mapping model."""


@dataclass(eq=False)
class EncodedStream:
    fingerprint: int
    config: CodecConfig
    original_length: int
    records: list[FrameCode] = field(default_factory=list)

    @property
    def frame_count(self) -> int:
        return len(self.records)

    def same_as(self, other: "EncodedStream") -> bool:
        return (
            self.fingerprint == other.fingerprint
            and self.config.format_key() == other.config.format_key()
            and self.original_length == other.original_length
            and self.frame_count == other.frame_count
            and all(a.same_as(b) for a, b in zip(self.records, other.records))
        )


# ------------------------------------------------------------------ pipeline


def analysis_frames(signal, model: MappingModel, trace: list | None = None) -> np.ndarray:
    """Frame, transform and normalize a raw signal for coding."""
    cfg = model.config
    frames = dsp.frame_signal(signal, cfg.frame_len, cfg.hop)
    _mark(trace, "frame")
    if cfg.domain is Domain.DCT:
        frames = dsp.dct_forward(frames)
    _mark(trace, "transform")
    frames = dsp.normalize(frames, model.norm)
    _mark(trace, "normalize")
    return frames


def _mark(trace, stage):
    if trace is not None:
        trace.append(stage)


def _code_chunk(args):
    model, cfg, frames, start = args
    return [code_frame(model, f, start + i, cfg) for i, f in enumerate(frames)]


def encode(signal, model: MappingModel, cfg: CodecConfig | None = None, trace: list | None = None) -> EncodedStream:
    """Encode a raw signal into one FrameCode per analysis frame.

    `cfg` supplies the coding-phase hyperparameters and seed; its framing
    and topology must agree with the model.
    """
    cfg = cfg or model.config
    _check_compatible(cfg, model.config)
    signal = np.asarray(signal, dtype=np.float64)
    frames = analysis_frames(signal, model, trace)

    jobs = max(1, int(cfg.jobs))
    if jobs == 1 or len(frames) < 2 * jobs:
        records = _code_chunk((model, cfg, frames, 0))
    else:
        # frames are independent; chunks are reassembled in index order
        bounds = np.linspace(0, len(frames), jobs + 1).astype(int)
        chunks = [(model, cfg, frames[a:b], a) for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = [r for part in pool.map(_code_chunk, chunks) for r in part]
    _mark(trace, "code")
    return EncodedStream(fingerprint(model), model.config, signal.size, records)


def decode(stream: EncodedStream, model: MappingModel, trace: list | None = None) -> np.ndarray:
    """Reconstruct the signal from its codes using the same mapping model."""
    if stream.fingerprint != fingerprint(model):
        raise ModelMismatchError(
            f"model/stream mismatch: stream fingerprint {stream.fingerprint:016x}, "
            f"model fingerprint {fingerprint(model):016x}"
        )
    cfg = model.config
    frames = np.array([predict_frame(model, rec, cfg.frame_len) for rec in stream.records])
    _mark(trace, "predict")
    frames = dsp.denormalize(frames, model.norm)
    _mark(trace, "denormalize")
    if cfg.domain is Domain.DCT:
        frames = dsp.dct_inverse(frames)
    _mark(trace, "inverse_transform")
    out = dsp.overlap_add(frames, cfg.hop, length=stream.original_length)
    _mark(trace, "overlap_add")
    return out


def _check_compatible(cfg: CodecConfig, model_cfg: CodecConfig):
    if cfg.format_key() != model_cfg.format_key():
        raise ValueError(f"codec config {cfg.format_key()} is inconsistent with model {model_cfg.format_key()}")


# ------------------------------------------------------------- serialization


def model_bytes(model: MappingModel) -> bytes:
    cfg = model.config
    header = MODEL_HEADER.pack(
        MODEL_MAGIC,
        FORMAT_VERSION,
        int(cfg.domain),
        cfg.frame_len,
        cfg.hop,
        cfg.pred_window,
        cfg.num_codes,
        cfg.sample_rate,
        model.norm.mean,
        model.norm.std_dev,
    )
    return (
        header
        + model.hidden_bias.astype("<f4").tobytes()
        + np.ascontiguousarray(model.w1).astype("<f4").tobytes()
    )


def fingerprint(model: MappingModel) -> int:
    """64-bit hash of the serialized model."""
    digest = hashlib.blake2b(model_bytes(model), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _need(buf: bytes, offset: int, size: int, what: str):
    if len(buf) < offset + size:
        raise FormatError(
            f"truncated file: {what} needs {size} bytes at offset {offset}, "
            f"only {max(len(buf) - offset, 0)} available"
        )


def _check_magic(buf: bytes, magic: bytes):
    _need(buf, 0, 4, "magic")
    if buf[:4] != magic:
        raise FormatError(f"bad magic at offset 0: expected {magic!r}, found {bytes(buf[:4])!r}")


def _check_version(version: int):
    if version != FORMAT_VERSION:
        raise FormatError(f"version mismatch at offset 4: file has {version}, expected {FORMAT_VERSION}")


def _read_domain(tag: int, offset: int) -> Domain:
    try:
        return Domain(tag)
    except ValueError:
        raise FormatError(f"unknown domain tag {tag} at offset {offset}") from None


def parse_model(buf: bytes) -> MappingModel:
    _check_magic(buf, MODEL_MAGIC)
    _need(buf, 0, MODEL_HEADER.size, "model header")
    magic, version, dom, n, hop, l, m, rate, mu, sigma = MODEL_HEADER.unpack_from(buf, 0)
    _check_version(version)
    domain = _read_domain(dom, 6)
    h = m - 1
    offset = MODEL_HEADER.size
    _need(buf, offset, 4 * h, "hidden_bias")
    bias = np.frombuffer(buf, "<f4", h, offset).astype(np.float64)
    offset += 4 * h
    _need(buf, offset, 4 * h * l, "w1")
    w1 = np.frombuffer(buf, "<f4", h * l, offset).astype(np.float64).reshape(h, l)
    offset += 4 * h * l
    if len(buf) != offset:
        raise FormatError(f"trailing data at offset {offset}: {len(buf) - offset} extra bytes")
    try:
        cfg = CodecConfig(PredictorConfig(num_codes=m, pred_window=l), domain, n, hop, rate)
        norm = dsp.NormStats(mu, sigma)
    except ValueError as exc:
        raise FormatError(f"invalid model header: {exc}") from None
    return MappingModel(w1, bias, norm, cfg)


def write_model(model: MappingModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def read_model(path) -> MappingModel:
    return parse_model(Path(path).read_bytes())


def record_size(cfg: CodecConfig) -> int:
    return 4 + 4 * cfg.pred_window + 4 * (cfg.num_codes - 1) + 4


def stream_size(cfg: CodecConfig, frame_count: int) -> int:
    """Exact byte size of a stream file."""
    return STREAM_HEADER.size + frame_count * record_size(cfg)


def stream_bytes(stream: EncodedStream) -> bytes:
    cfg = stream.config
    parts = [
        STREAM_HEADER.pack(
            STREAM_MAGIC,
            FORMAT_VERSION,
            stream.fingerprint,
            int(cfg.domain),
            cfg.frame_len,
            cfg.hop,
            cfg.pred_window,
            cfg.num_codes,
            cfg.sample_rate,
            stream.original_length,
            stream.frame_count,
        )
    ]
    for rec in stream.records:
        parts.append(struct.pack("<I", rec.frame_index))
        parts.append(rec.seed.astype("<f4").tobytes())
        parts.append(rec.w2.astype("<f4").tobytes())
        parts.append(struct.pack("<f", rec.output_bias))
    return b"".join(parts)


def parse_stream(buf: bytes) -> EncodedStream:
    _check_magic(buf, STREAM_MAGIC)
    _need(buf, 0, STREAM_HEADER.size, "stream header")
    (magic, version, fp, dom, n, hop, l, m, rate, length, count) = STREAM_HEADER.unpack_from(buf, 0)
    _check_version(version)
    if fp == 0:
        raise FormatError("missing model fingerprint at offset 6")
    domain = _read_domain(dom, 14)
    try:
        cfg = CodecConfig(PredictorConfig(num_codes=m, pred_window=l), domain, n, hop, rate)
    except ValueError as exc:
        raise FormatError(f"invalid stream header: {exc}") from None
    rec = struct.Struct(f"<I{l}f{m - 1}ff")
    offset = STREAM_HEADER.size
    records = []
    for i in range(count):
        _need(buf, offset, rec.size, f"frame record {i}")
        vals = rec.unpack_from(buf, offset)
        records.append(
            FrameCode(
                w2=np.array(vals[1 + l : l + m], dtype=np.float64),
                output_bias=float(vals[-1]),
                seed=np.array(vals[1 : 1 + l], dtype=np.float64),
                frame_index=int(vals[0]),
                domain=domain,
            )
        )
        offset += rec.size
    if len(buf) != offset:
        raise FormatError(f"trailing data at offset {offset}: {len(buf) - offset} extra bytes")
    return EncodedStream(fp, cfg, int(length), records)


def write_stream(stream: EncodedStream, path) -> None:
    Path(path).write_bytes(stream_bytes(stream))


def read_stream(path) -> EncodedStream:
    return parse_stream(Path(path).read_bytes())
