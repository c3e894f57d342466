"""Exception hierarchy shared across the package."""


class RoiFloodError(Exception):
    """Base class for all package errors."""


class NonConvergence(RoiFloodError):
    """The likelihood optimizer stopped without meeting its tolerance."""


class DegenerateSample(RoiFloodError, ValueError):
    """A sample carries no spread (all values equal)."""


class InsufficientData(RoiFloodError, ValueError):
    """Too few observations or stations for the requested fit."""


class RankDeficientCovariates(RoiFloodError, ValueError):
    """The log-attribute design matrix is not of full column rank."""


class SchemaMismatch(RoiFloodError, ValueError):
    """Attributes supplied do not match the covariate schema."""


class ZeroVariance(RoiFloodError, ValueError):
    """An attribute is constant across the stations used for normalization."""


class InsufficientPool(RoiFloodError, ValueError):
    """More neighbours requested than the pool contains."""


class NoConvergedCandidate(RoiFloodError):
    """Every candidate region failed to produce a fitted model."""


class ZeroObservation(RoiFloodError, ValueError):
    """An order statistic used as a relative-error denominator is not positive."""


class SingularCovariance(RoiFloodError, ValueError):
    """A covariance block needed for canonical correlation is singular."""


class EmptyRegion(RoiFloodError):
    """No pool station lies within the requested radius."""


class EstimatorFailure(RoiFloodError):
    """Too many bootstrap replicates failed."""


class NonpositiveArea(RoiFloodError, ValueError):
    """Catchment area must be strictly positive."""


class ParseError(RoiFloodError, ValueError):
    """A row of an input table failed validation."""

    def __init__(self, row, column, reason):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class SchemaError(RoiFloodError, ValueError):
    """An input table header does not match the expected schema."""
