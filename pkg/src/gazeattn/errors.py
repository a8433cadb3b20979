"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 2 (argparse),
ValidationError and subclasses exit 3, runtime failures exit 4.
"""


class GazeAttnError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GazeAttnError):
    """Input data or arguments violate a documented contract."""


class ParseError(ValidationError):
    """A text file (transcription, gaze CSV, manifest) is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValidationError):
    """A configuration value is out of range or inconsistent."""


class ShapeError(ValidationError):
    """Array shapes do not match the operation's contract."""


class UndefinedMetricError(ValidationError):
    """A metric has no defined value (e.g. no labeled frames)."""


class TrainingDivergedError(GazeAttnError):
    """A non-finite loss or gradient was encountered during training."""
