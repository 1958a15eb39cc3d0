"""Exception hierarchy for the pruning engine.

Every error raised by this package derives from ZPrunerError so callers can
catch one base class at API boundaries.  The CLI maps any ZPrunerError to a
single machine-parsable stderr line and exit code 1.
"""

from __future__ import annotations


class ZPrunerError(Exception):
    """Base class for all engine errors."""


class MatrixError(ZPrunerError):
    """A tensor is not a valid dense 2-D float32 matrix."""


class ShapeError(ZPrunerError):
    """Operands have incompatible or out-of-contract shapes."""


class DomainError(ZPrunerError):
    """A numeric input lies outside the mathematical domain of an operation."""


class InvalidMetricError(ZPrunerError):
    """An importance metric contains NaN or infinite entries."""


class FormatError(ZPrunerError):
    """An archive file violates the on-disk container format."""


class InvalidArchiveError(ZPrunerError):
    """An archive's logical content is unusable (empty, bad names, bad dtypes)."""


class ArchiveIOError(ZPrunerError):
    """Reading or writing an engine file failed at the filesystem level."""


class EmptyCalibrationError(ZPrunerError):
    """Activation statistics were requested from zero calibration tokens."""


class TokenError(ZPrunerError):
    """A token id falls outside the model's vocabulary."""


class CorpusError(ZPrunerError):
    """A token corpus is too short or malformed for the requested operation."""


class EmptyEvalError(ZPrunerError):
    """An evaluation was requested over an empty item list or token stream."""
