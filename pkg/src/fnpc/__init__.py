"""Frame-based nonlinear predictive speech coding."""

from fnpc.config import CodecConfig, Domain, PredictorConfig
from fnpc.dsp import NormStats
from fnpc.predictor import FrameCode, MappingModel

__all__ = ["CodecConfig", "Domain", "FrameCode", "MappingModel", "NormStats", "PredictorConfig"]
__version__ = "0.1.0"
