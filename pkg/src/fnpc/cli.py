"""Command-line interface: ``fnpc <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from fnpc import codec, dsp, metrics
from fnpc.config import (
    DEFAULT_CODE_ITERS,
    DEFAULT_CODE_LR,
    DEFAULT_MAP_EPOCHS,
    DEFAULT_MAP_LR,
    CodecConfig,
    Domain,
    PredictorConfig,
)
from fnpc.corpus import build_mapping_dataset, load_corpus, read_manifest, read_wav, write_wav
from fnpc.experiment import sweep, write_sweep_csv
from fnpc.predictor import train_mapping

log = logging.getLogger("fnpc")


class CliError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _domain_list(text: str) -> list[Domain]:
    try:
        return [Domain.parse(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _domain(text: str) -> Domain:
    try:
        return Domain.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_map_flags(p):
    p.add_argument("--epochs", type=int, default=DEFAULT_MAP_EPOCHS, help="mapping-phase epochs")
    p.add_argument("--lr", type=float, default=DEFAULT_MAP_LR, help="mapping-phase learning rate")
    p.add_argument("--pred-window", type=int, default=40, help="prediction window L")


def _add_code_flags(p):
    p.add_argument("--code-iters", type=int, default=DEFAULT_CODE_ITERS)
    p.add_argument("--code-lr", type=float, default=DEFAULT_CODE_LR, help="fraction of the safe coding step")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel coding workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fnpc", description="Frame-based nonlinear predictive speech codec")
    parser.add_argument("--config", type=Path, help="key=value file of flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-map", help="train a mapping model on a corpus")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--domain", type=_domain, required=True)
    p.add_argument("--codes", type=int, required=True, help="code count M (hidden units = M-1)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_map_flags(p)

    p = sub.add_parser("encode", help="encode a WAV file into a code stream")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_code_flags(p)

    p = sub.add_parser("decode", help="decode a code stream into a WAV file")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="objective quality of a test WAV against a reference")
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--out", type=Path, help="report.json (stdout if omitted)")

    p = sub.add_parser("add-noise", help="add white Gaussian noise at a given SNR")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("spectrogram", help="export a dB spectrogram as CSV")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("sweep", help="domain x code-count quality grid")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--codes", type=_int_list, default=[8, 11, 16])
    p.add_argument("--domains", type=_domain_list, default=[Domain.TIME, Domain.DCT])
    p.add_argument("--noise-snr", type=float, help="code a noisy copy (scored against the clean input)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    _add_map_flags(p)
    _add_code_flags(p)

    p = sub.add_parser("dump", help="print a stream header and per-frame code summary")
    p.add_argument("--in", dest="input", type=Path, required=True)
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv, config_path: Path):
    """Install config-file values as defaults of the chosen subcommand."""
    if not config_path.is_file():
        raise CliError(f"config file not found: {config_path}")
    values = read_config_file(config_path)
    command = next((a for a in argv if a in COMMANDS), None)
    if command is None:
        return
    subparser = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key == "help":
            raise CliError(f"{config_path}: unknown key {key!r} for '{command}'")
        action = actions[key]
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CliError(f"{config_path}: bad value for {key!r}: {exc}") from None
        action.required = False
    subparser.set_defaults(**defaults)


def _require_files(*paths):
    for p in paths:
        if not Path(p).is_file():
            raise CliError(f"file not found: {p}")


def _predictor(args, codes: int) -> PredictorConfig:
    return PredictorConfig(
        num_codes=codes,
        pred_window=getattr(args, "pred_window", 40),
        map_learning_rate=getattr(args, "lr", DEFAULT_MAP_LR),
        code_learning_rate=getattr(args, "code_lr", DEFAULT_CODE_LR),
        map_epochs=getattr(args, "epochs", DEFAULT_MAP_EPOCHS),
        code_iterations=getattr(args, "code_iters", DEFAULT_CODE_ITERS),
        rng_seed=args.seed,
    )


def cmd_train_map(args):
    _require_files(args.manifest)
    entries = read_manifest(args.manifest)
    rate = read_wav(entries[0].audio).sample_rate if entries[0].audio.is_file() else 16000
    cfg = CodecConfig(_predictor(args, args.codes), args.domain, sample_rate=rate)
    stream, stats = build_mapping_dataset(entries, cfg)
    log.info("mapping stream: %d values, mean=%.6g std=%.6g", stream.size, stats.mean, stats.std_dev)
    model = train_mapping(stream, stats, cfg)
    for i, l in enumerate(model.loss_history):
        log.info("epoch %d: mean loss %.6g", i, l)
    codec.write_model(model, args.out)
    log.info("wrote %s (fingerprint %016x)", args.out, codec.fingerprint(model))


def cmd_encode(args):
    _require_files(args.model, args.input)
    model = codec.read_model(args.model)
    audio = read_wav(args.input)
    if audio.sample_rate != model.config.sample_rate:
        raise CliError(f"{args.input}: sample rate {audio.sample_rate} != model rate {model.config.sample_rate}")
    pc = _predictor(args, model.config.num_codes)
    cfg = CodecConfig(pc, model.domain, model.config.frame_len, model.config.hop, model.config.sample_rate, args.jobs)
    stream = codec.encode(audio.samples, model, cfg)
    codec.write_stream(stream, args.out)
    log.info("wrote %s: %d frames", args.out, stream.frame_count)


def cmd_decode(args):
    _require_files(args.model, args.input)
    model = codec.read_model(args.model)
    stream = codec.read_stream(args.input)
    y = codec.decode(stream, model)
    write_wav(y, args.out, stream.config.sample_rate)
    log.info("wrote %s: %d samples", args.out, y.size)


def cmd_eval(args):
    _require_files(args.ref, args.test)
    ref, test = read_wav(args.ref), read_wav(args.test)
    if ref.sample_rate != test.sample_rate:
        raise CliError("reference and test sample rates differ")
    report = metrics.evaluate(ref.samples, test.samples, ref.sample_rate)
    text = report.to_json()
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)


def cmd_add_noise(args):
    _require_files(args.input)
    audio = read_wav(args.input)
    write_wav(dsp.add_awgn(audio.samples, args.snr, args.seed), args.out, audio.sample_rate)


def cmd_spectrogram(args):
    _require_files(args.input)
    audio = read_wav(args.input)
    metrics.write_spectrogram_csv(metrics.spectrogram(audio.samples), args.out)


def cmd_sweep(args):
    _require_files(args.manifest, args.input)
    audios = load_corpus(read_manifest(args.manifest))
    x = read_wav(args.input)
    coded = x.samples if args.noise_snr is None else dsp.add_awgn(x.samples, args.noise_snr, args.seed)
    rows = sweep(
        [a.samples for a in audios],
        coded,
        codes=args.codes,
        domains=args.domains,
        base=_predictor(args, 2),
        sample_rate=x.sample_rate,
        jobs=args.jobs,
        reference=x.samples,
    )
    write_sweep_csv(rows, args.out)


def cmd_dump(args):
    _require_files(args.input)
    stream = codec.read_stream(args.input)
    cfg = stream.config
    out = sys.stdout
    print(f"fingerprint     {stream.fingerprint:016x}", file=out)
    print(f"domain          {cfg.domain.name.lower()}", file=out)
    print(f"frame_len/hop   {cfg.frame_len}/{cfg.hop}", file=out)
    print(f"window L        {cfg.pred_window}", file=out)
    print(f"codes M         {cfg.num_codes}", file=out)
    print(f"sample_rate     {cfg.sample_rate}", file=out)
    print(f"original_length {stream.original_length}", file=out)
    print(f"frames          {stream.frame_count}", file=out)
    print("index  bias        |w2|        seed_rms", file=out)
    for rec in stream.records:
        print(
            f"{rec.frame_index:5d}  {rec.output_bias:+.4e}  {np.linalg.norm(rec.w2):.4e}  "
            f"{np.sqrt(np.mean(rec.seed ** 2)):.4e}",
            file=out,
        )


COMMANDS = {
    "train-map": cmd_train_map,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "add-noise": cmd_add_noise,
    "spectrogram": cmd_spectrogram,
    "sweep": cmd_sweep,
    "dump": cmd_dump,
}


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre.add_argument("-v", "--verbose", action="store_true")
    early, _ = pre.parse_known_args(argv)
    logging.basicConfig(
        level=logging.INFO if early.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    command = next((a for a in argv if a in COMMANDS), "fnpc")
    try:
        if early.config is not None:
            _apply_config(parser, argv, early.config)
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"fnpc {command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
