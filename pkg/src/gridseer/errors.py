"""Exception hierarchy shared across gridseer modules.

Every error carries a stable ``code`` used by the command line to pick an
exit status.
"""

from __future__ import annotations


class GridseerError(Exception):
    """Base class for all gridseer errors."""

    exit_code = 1


class InvalidInput(GridseerError, ValueError):
    """Input data or arguments violate a documented contract."""

    exit_code = 2


class RuntimeFailure(GridseerError, RuntimeError):
    exit_code = 1


class RegistryFailure(GridseerError):
    exit_code = 3


class VerificationFailure(GridseerError):
    exit_code = 4


# telemetry


class MissingHeader(InvalidInput):
    pass


class RowError(InvalidInput):
    """An error tied to one data row (1-based, header excluded)."""

    def __init__(self, row: int, message: str, column: str | None = None):
        self.row = row
        self.column = column
        self.detail = message
        where = f"row {row}" + (f", column {column!r}" if column else "")
        super().__init__(f"{where}: {message}")


class BadTimestamp(RowError):
    pass


class OutOfRange(RowError):
    pass


class RaggedRow(RowError):
    pass


class MalformedField(RowError):
    pass


class DuplicateTimestamp(InvalidInput):
    pass


class NoRecordsForNode(InvalidInput):
    pass


class GapExceedsLimit(InvalidInput):
    pass


class SpanTooShort(InvalidInput):
    pass


class SeriesTooShort(InvalidInput):
    pass


# models


class EmptyInput(InvalidInput):
    pass


class DimensionMismatch(InvalidInput):
    pass


class LengthMismatch(InvalidInput):
    pass


class NonFiniteInput(InvalidInput):
    pass


class BadWindowLength(InvalidInput):
    pass


class EmptyDataset(InvalidInput):
    pass


class DivergedToNonFinite(RuntimeFailure):
    pass


# catalog


class MissingFeatureColumn(InvalidInput):
    pass


class SeriesShorterThanLookback(InvalidInput):
    pass


class EmptyCluster(InvalidInput):
    pass


class BadRange(InvalidInput):
    pass


class WrongInputDim(InvalidInput):
    pass


class ArchitectureMismatch(InvalidInput):
    pass


class AllZeroWeights(InvalidInput):
    pass


# bundle


class InconsistentManifest(InvalidInput):
    pass


class MalformedPayload(InvalidInput):
    pass


class UnsupportedSchemaVersion(InvalidInput):
    pass


class HashMismatch(VerificationFailure):
    pass


class MissingInputFile(InvalidInput):
    pass


class OutputNotWritable(RuntimeFailure):
    pass


# registry


class InvalidBundle(RegistryFailure):
    pass


class NotFound(RegistryFailure):
    pass


class StorageFull(RegistryFailure):
    pass
