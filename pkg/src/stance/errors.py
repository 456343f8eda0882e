"""Exception types shared across the package."""

from __future__ import annotations


class StanceError(Exception):
    """Base class for all errors raised by this package."""


class DatasetNotFoundError(StanceError):
    """A requested dataset has no prepared files under the corpus root."""


class SchemaViolationError(StanceError):
    """A corpus record does not conform to the unified schema."""


class UnknownDatasetError(StanceError):
    """A dataset name is not part of the registry or label space in use."""


class UnmappedLabelError(StanceError):
    """A label has no entry in the stance-group table in use."""


class EmbeddingLookupError(StanceError):
    """A label name could not be embedded with the given vector table."""


class TrainingDivergedError(StanceError):
    """Training produced a non-finite loss and was aborted."""
