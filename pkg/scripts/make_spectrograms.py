"""Code an utterance in both domains and export dB spectrogram CSVs.

Produces original.csv, time.csv and dct.csv (rows are frequency bins, columns
are frames) for an external plotter, plus the decoded WAVs. With --noise-snr
the coded input is a noisy copy and noisy.csv is written as well.
"""

import argparse
from pathlib import Path

from fnpc import codec, dsp, metrics
from fnpc.config import CodecConfig, Domain, PredictorConfig
from fnpc.corpus import read_wav, write_wav
from fnpc.experiment import train_on_signals


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("wav", type=Path)
    ap.add_argument("--codes", type=int, default=16)
    ap.add_argument("--noise-snr", type=float)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/spectrograms"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    audio = read_wav(args.wav)
    x = audio.samples
    metrics.write_spectrogram_csv(metrics.spectrogram(x), args.out / "original.csv")
    if args.noise_snr is not None:
        x = dsp.add_awgn(x, args.noise_snr, args.seed)
        metrics.write_spectrogram_csv(metrics.spectrogram(x), args.out / "noisy.csv")

    for domain in (Domain.TIME, Domain.DCT):
        cfg = CodecConfig(PredictorConfig(args.codes, rng_seed=args.seed), domain, sample_rate=audio.sample_rate)
        model = train_on_signals([audio.samples], cfg)
        y = codec.decode(codec.encode(x, model, cfg), model)
        name = domain.name.lower()
        write_wav(y, args.out / f"{name}.wav", audio.sample_rate)
        metrics.write_spectrogram_csv(metrics.spectrogram(y), args.out / f"{name}.csv")
        print(f"{name}: {metrics.evaluate(audio.samples, y, audio.sample_rate).to_json()}")


if __name__ == "__main__":
    main()
