"""Exception types used across the toolkit."""


class LbdecompError(Exception):
    """Base class for all toolkit errors."""


class InvalidGeometryError(LbdecompError):
    """Generator preconditions violated or the result is unusable."""


class GeometryParseError(LbdecompError):
    """Geometry file is malformed (bad header, truncation, bad sites)."""


class UnderdeterminedFitError(LbdecompError):
    """Cost fit requested with a rank-deficient observation matrix."""


class InfeasibleSeedError(LbdecompError):
    """Block seeding asked for more parts than non-empty blocks."""


class PartitionError(LbdecompError):
    """Partitioning preconditions violated."""


class NumericalDivergenceError(LbdecompError):
    """LB state produced NaN or non-positive density."""

    def __init__(self, site: int, message: str | None = None):
        self.site = site
        super().__init__(message or f"numerical divergence at site {site}")


class UnreliableMeasurementError(LbdecompError):
    """Micro-benchmark window too short for the timer resolution."""


class SchemaError(LbdecompError):
    """CSV input does not match the expected column schema."""
