"""Exception types shared across the package."""

from __future__ import annotations


class RecselectError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(RecselectError):
    """Raised when an input table is missing required columns."""


class RowParseError(RecselectError):
    """Raised when a data row cannot be converted; carries the row index."""

    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


class EmptyDatasetError(RecselectError):
    """Raised when an operation receives or produces a dataset with no interactions."""


class ColdStartError(RecselectError):
    """Raised when recommendations are requested for a user absent from training."""


class DivergenceError(RecselectError):
    """Raised when iterative training produces non-finite values."""


class MatrixInversionError(RecselectError):
    """Raised when a closed-form solve fails on an ill-conditioned Gram matrix."""


class SourceMetricError(RecselectError):
    """Raised when source code cannot be tokenized or parsed for metrics."""


class ConfigError(RecselectError):
    """Raised for invalid or inconsistent configuration values."""
