"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value is out of its valid range."""


class WindowError(ConfigError):
    """A window/kernel length does not fit the series it is applied to."""


class DataError(ValueError):
    """Input data is malformed (bad cells, empty file, too short)."""


class SchemaError(DataError):
    """Schema and file header disagree."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt, truncated or does not fit the model."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss or gradient appeared during training."""

    def __init__(self, message, epoch=None, batch=None, parameter=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.parameter = parameter
