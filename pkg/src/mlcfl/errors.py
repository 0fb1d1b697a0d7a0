"""Exception types shared across the pipeline."""


class MlcflError(Exception):
    """Base class for all mlcfl errors."""


class SchemaError(MlcflError):
    """CSV column mapping is invalid or a mapped column is missing."""


class DataFormatError(MlcflError):
    """Malformed input data (bad row, non-monotonic timestamps, ...)."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SplitError(MlcflError):
    """Cross-validation split cannot be built as requested."""


class RankDeficiencyError(MlcflError):
    """Training data does not span enough dimensions for the requested fit."""

    def __init__(self, requested: int, achievable: int):
        super().__init__(
            f"requested {requested} components but achievable rank is {achievable}"
        )
        self.requested = requested
        self.achievable = achievable


class DimensionError(MlcflError):
    """Vector or matrix dimensions do not match the fitted parameters."""


class TrainingDataError(MlcflError):
    """Training data violates a fitting precondition (support, cluster count)."""


class ContainerError(MlcflError):
    """Model or frame container is corrupt or has an unsupported version."""
