"""End-to-end runs: train a mapping model, code an utterance, score the result."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from fnpc import codec, dsp, metrics
from fnpc.config import CodecConfig, Domain, PredictorConfig
from fnpc.corpus import domain_stream
from fnpc.predictor import MappingModel, train_mapping

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("domain", "codes", "segsnr_db", "llr", "wss")


@dataclass
class SweepRow:
    domain: Domain
    codes: int
    report: metrics.QualityReport

    def as_csv_row(self):
        r = self.report
        return [self.domain.name.lower(), self.codes, f"{r.segsnr_db:.4f}", f"{r.llr:.4f}", f"{r.wss:.4f}"]


def train_on_signals(signals, cfg: CodecConfig) -> MappingModel:
    stream = domain_stream(signals, cfg.domain, cfg.frame_len, cfg.hop)
    stats = dsp.compute_norm_stats(stream)
    return train_mapping(dsp.normalize(stream, stats), stats, cfg)


def code_and_score(x, model: MappingModel, cfg: CodecConfig, reference=None) -> metrics.QualityReport:
    """Encode and decode `x`, then score the decoded signal against `reference` (default `x`)."""
    stream = codec.encode(x, model, cfg)
    y = codec.decode(stream, model)
    ref = x if reference is None else reference
    return metrics.evaluate(ref, y, cfg.sample_rate, cfg.frame_len, cfg.hop)


def sweep(
    corpus_signals,
    x,
    codes=(8, 11, 16),
    domains=(Domain.TIME, Domain.DCT),
    base: PredictorConfig | None = None,
    sample_rate: int = 16000,
    jobs: int = 1,
    reference=None,
) -> list[SweepRow]:
    """One row per (domain, M): train the mapping, code `x`, evaluate."""
    base = base or PredictorConfig(num_codes=2)
    rows = []
    for domain in domains:
        for m in codes:
            pc = PredictorConfig(
                num_codes=m,
                pred_window=base.pred_window,
                map_learning_rate=base.map_learning_rate,
                code_learning_rate=base.code_learning_rate,
                map_epochs=base.map_epochs,
                code_iterations=base.code_iterations,
                rng_seed=base.rng_seed,
            )
            cfg = CodecConfig(pc, Domain.parse(domain), sample_rate=sample_rate, jobs=jobs)
            log.info("sweep: training %s mapping with M=%d", cfg.domain.name, m)
            model = train_on_signals(corpus_signals, cfg)
            report = code_and_score(np.asarray(x, dtype=np.float64), model, cfg, reference)
            log.info(
                "sweep: %s M=%d segsnr=%.2f llr=%.3f wss=%.2f",
                cfg.domain.name, m, report.segsnr_db, report.llr, report.wss,
            )
            rows.append(SweepRow(cfg.domain, m, report))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv_row())
