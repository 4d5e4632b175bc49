"""Configuration dataclasses shared by the predictor, codec and CLI."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace


class Domain(enum.IntEnum):
    """Signal domain the predictor operates in (value is the on-disk tag)."""

    TIME = 0
    DCT = 1

    @classmethod
    def parse(cls, name: "str | Domain") -> "Domain":
        if isinstance(name, Domain):
            return name
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown domain {name!r} (expected 'time' or 'dct')") from None


# Defaults for the four training hyperparameters. None of them are fixed by the
# method itself; these were chosen so that both phases converge on 16 kHz speech.
DEFAULT_MAP_LR = 0.01
DEFAULT_CODE_LR = 1.0
DEFAULT_MAP_EPOCHS = 20
DEFAULT_CODE_ITERS = 200


@dataclass(frozen=True)
class PredictorConfig:
    """Topology and training hyperparameters of the two-layer predictor.

    ``code_learning_rate`` is expressed relative to the largest step that is
    guaranteed to decrease the per-frame loss (see ``predictor.code_frame``),
    so any value in (0, 1] gives monotone coding-phase descent.
    """

    num_codes: int
    pred_window: int = 40
    map_learning_rate: float = DEFAULT_MAP_LR
    code_learning_rate: float = DEFAULT_CODE_LR
    map_epochs: int = DEFAULT_MAP_EPOCHS
    code_iterations: int = DEFAULT_CODE_ITERS
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_codes < 2:
            raise ValueError(f"num_codes must be >= 2, got {self.num_codes}")
        if self.pred_window < 1:
            raise ValueError(f"pred_window must be >= 1, got {self.pred_window}")
        if not self.map_learning_rate > 0 or not self.code_learning_rate > 0:
            raise ValueError("learning rates must be positive")
        if self.map_epochs < 0 or self.code_iterations < 0:
            raise ValueError("epoch and iteration counts must be non-negative")

    @property
    def hidden_units(self) -> int:
        return self.num_codes - 1


@dataclass(frozen=True)
class CodecConfig:
    """Framing parameters plus the embedded predictor configuration."""

    predictor: PredictorConfig
    domain: Domain = Domain.TIME
    frame_len: int = 256
    hop: int = 128
    sample_rate: int = 16000
    jobs: int = field(default=1, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain.parse(self.domain))
        if self.frame_len % 2 or self.frame_len <= 0:
            raise ValueError(f"frame_len must be positive and even, got {self.frame_len}")
        if self.hop <= 0 or self.frame_len % self.hop:
            raise ValueError(f"hop {self.hop} must divide frame_len {self.frame_len}")
        if self.frame_len <= self.predictor.pred_window:
            raise ValueError("frame_len must exceed the prediction window")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_codes(self) -> int:
        return self.predictor.num_codes

    @property
    def pred_window(self) -> int:
        return self.predictor.pred_window

    def format_key(self) -> tuple:
        """The fields that are written to model and stream headers."""
        return (self.domain, self.frame_len, self.hop, self.pred_window, self.num_codes, self.sample_rate)

    def with_predictor(self, **changes) -> "CodecConfig":
        return replace(self, predictor=replace(self.predictor, **changes))
