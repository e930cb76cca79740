"""Config-driven CSI prediction: CDL channel simulation, diffusion
predictors with pluggable temporal encoders and denoising backbones,
and NMSE benchmarking against direct baselines.
"""

from . import chansim, config, datafile, diffusion, evalkit, nets, pipeline, profiles
from .errors import (
    CheckpointError,
    ConfigError,
    CorruptFileError,
    CsidiffError,
    DataError,
    DegenerateStepError,
    EstimatorError,
    InputError,
    InvalidScheduleError,
    MetricError,
    TrainingDivergedError,
    UnsupportedFormatError,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "CorruptFileError",
    "CsidiffError",
    "DataError",
    "DegenerateStepError",
    "EstimatorError",
    "InputError",
    "InvalidScheduleError",
    "MetricError",
    "TrainingDivergedError",
    "UnsupportedFormatError",
    "__version__",
    "chansim",
    "config",
    "datafile",
    "diffusion",
    "evalkit",
    "nets",
    "pipeline",
    "profiles",
]
