"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
everything else -> 4.
"""


class CsidiffError(Exception):
    """Base class for all package errors."""


class ConfigError(CsidiffError, ValueError):
    """Invalid configuration value, section, or combination."""


class InputError(CsidiffError, ValueError):
    """Runtime input violates an operation's preconditions."""


class DataError(CsidiffError):
    """Dataset-level problem (empty split, bad file, size mismatch)."""


class CorruptFileError(DataError):
    """Payload does not match the declared header layout."""


class UnsupportedFormatError(DataError):
    """File lacks a schema_version or declares an unknown one."""


class DegenerateStepError(CsidiffError, ValueError):
    """Noise inversion requested at a step where alpha_bar is ~1."""


class InvalidScheduleError(CsidiffError, ValueError):
    """Sampler coefficients left the valid region (1 - abar_prev - sigma^2 < 0)."""


class MetricError(CsidiffError, ValueError):
    """Metric undefined for the given inputs (e.g. zero-norm ground truth)."""


class EstimatorError(CsidiffError, ValueError):
    """FLOP estimator hit a parametric layer it has no rule for."""


class CheckpointError(CsidiffError):
    """Checkpoint file incompatible with the requested model spec."""


class TrainingDivergedError(CsidiffError, RuntimeError):
    """Loss became non-finite during training."""
