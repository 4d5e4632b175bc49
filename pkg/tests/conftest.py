import sys
from pathlib import Path

import numpy as np
import pytest

from fnpc import dsp
from fnpc.config import CodecConfig, Domain, PredictorConfig
from fnpc.predictor import train_mapping

DATA = Path(__file__).parent / "data"
SPEECH_WAV = DATA / "arctic_a0007.wav"


def sinusoid(freq=440.0, seconds=1.0, rate=16000, amp=0.5, phase=0.0):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


def small_cfg(codes=8, domain=Domain.TIME, **kw):
    kw.setdefault("map_epochs", 2)
    return CodecConfig(PredictorConfig(num_codes=codes, **kw), domain)


def train_on(x, cfg):
    stream = x if cfg.domain is Domain.TIME else dsp.dct_forward(dsp.frame_signal(x)).ravel()
    stats = dsp.compute_norm_stats(stream)
    return train_mapping(dsp.normalize(stream, stats), stats, cfg)


@pytest.fixture(scope="session")
def sine():
    return sinusoid()


@pytest.fixture(scope="session")
def sine_model(sine):
    return train_on(sine, small_cfg(16, map_epochs=3))


@pytest.fixture(scope="session")
def dct_model(sine):
    return train_on(sine, small_cfg(8, Domain.DCT))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
