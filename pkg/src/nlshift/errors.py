"""Exception types shared across the estimation pipeline."""

from __future__ import annotations


class NlshiftError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NlshiftError):
    """Invalid run configuration; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingColumn(NlshiftError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"required column {column!r} not found")


class NonFinite(NlshiftError):
    def __init__(self, row: int, col: str):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col!r}")


class EmptyPanel(NlshiftError):
    pass


class DegenerateKnots(NlshiftError):
    """Knot placement collapsed (ties in the training sample)."""


class RankDeficient(NlshiftError):
    def __init__(self, dropped: list[int], message: str = ""):
        self.dropped = dropped
        super().__init__(message or f"design is rank deficient; dependent columns {dropped}")


class NoConvergence(NlshiftError):
    pass


class TooFewDraws(NlshiftError):
    pass


class DegenerateSE(NlshiftError):
    pass


class WeakDesign(NlshiftError):
    """Instrument and treatment are (numerically) uncorrelated."""


class InvalidElasticity(NlshiftError):
    pass


class InvalidSpec(NlshiftError):
    """Synthetic-data specification violates a model assumption."""


class QuadratureNotConverged(NlshiftError):
    pass
