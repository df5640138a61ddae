"""Exception types raised across the package.

Every failure mode callers are expected to branch on gets its own class;
all inherit from SpinescaleError so a bare `except SpinescaleError` at the
CLI boundary catches everything we raise deliberately.
"""


class SpinescaleError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(SpinescaleError):
    """A configuration value violates its documented constraints."""


class NoCapacityError(SpinescaleError):
    """A flow cannot be placed because no active spine exists."""


class PolicyViolationError(SpinescaleError):
    """An action would push the topology outside its safety bounds."""


class NotFoundError(SpinescaleError):
    """A referenced entity (spine, topic, file) does not exist."""


class PersistenceError(SpinescaleError):
    """A backing file could not be written; no partial record was kept."""


class DecodeError(SpinescaleError):
    """A persisted record failed to parse; message names the offset."""


class GapError(SpinescaleError):
    """An hourly aggregate is missing samples for an active spine."""


class DataError(SpinescaleError):
    """Input data contains non-finite or otherwise unusable values."""


class InsufficientDataError(SpinescaleError):
    """A series is too short for the requested window/horizon."""


class InsufficientHistoryError(SpinescaleError):
    """Forecasting requires at least one full lookback of history."""


class ShapeError(SpinescaleError):
    """Array dimensions do not match the layer's parameters."""


class NumericError(SpinescaleError):
    """A non-finite activation or loss appeared; message names the layer."""


class TrainingDivergedError(SpinescaleError):
    """Training loss became non-finite; message reports the epoch."""


class ConsistencyError(SpinescaleError):
    """Two artifacts that must describe the same state disagree."""
