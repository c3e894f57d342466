"""Gauging station records and the covariate schema."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaMismatch

#: Attributes entering the log-linear links (catchment coordinates are
#: handled separately by the distance).
DEFAULT_ATTRIBUTES = (
    "size_km2",
    "altitude_m",
    "mean_daily_precip_mm",
    "mean_annmax_precip_mm",
)


@dataclass(frozen=True, eq=False)
class Station:
    """A catchment outlet with attributes and (possibly empty) annual maxima.

    ``x`` and ``y`` are centroid coordinates in a projected planar system
    (metres). An ungauged station has empty ``years``/``maxima``.
    """

    id: str
    x: float
    y: float
    attributes: Mapping[str, float]
    years: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    maxima: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        maxima = np.asarray(self.maxima, dtype=float)
        if years.shape != maxima.shape or years.ndim != 1:
            raise ValueError(f"station {self.id}: years and maxima must be 1-d and aligned")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "maxima", maxima)
        object.__setattr__(self, "attributes", dict(self.attributes))

    @property
    def n(self) -> int:
        return int(self.maxima.size)

    @property
    def gauged(self) -> bool:
        return self.n > 0

    def with_record(self, years, maxima) -> "Station":
        return Station(self.id, self.x, self.y, self.attributes, years, maxima)

    def ungauged(self) -> "Station":
        """Copy of this station with the discharge record removed."""
        return self.with_record(np.zeros(0, dtype=int), np.zeros(0))


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered attribute names used as log-covariates."""

    names: tuple[str, ...] = DEFAULT_ATTRIBUTES

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate covariate names in {names}")
        object.__setattr__(self, "names", names)

    @property
    def K(self) -> int:
        return len(self.names)

    def values(self, attributes) -> np.ndarray:
        """Attribute vector in schema order.

        ``attributes`` may be a :class:`Station`, a mapping, or a sequence of
        ``K`` numbers already in schema order.
        """
        if isinstance(attributes, Station):
            attributes = attributes.attributes
        if isinstance(attributes, Mapping):
            missing = [k for k in self.names if k not in attributes]
            if missing:
                raise SchemaMismatch(f"missing attributes {missing}")
            vals = np.array([attributes[k] for k in self.names], dtype=float)
        else:
            vals = np.asarray(attributes, dtype=float).ravel()
            if vals.size != self.K:
                raise SchemaMismatch(f"expected {self.K} attributes, got {vals.size}")
        if np.any(~(vals > 0)) or not np.all(np.isfinite(vals)):
            raise SchemaMismatch("covariates must be finite and strictly positive")
        return vals

    def log_design(self, stations: Sequence) -> np.ndarray:
        """``[1, log y_1, ..., log y_K]`` rows, one per station."""
        rows = [np.log(self.values(s)) for s in stations]
        X = np.ones((len(rows), self.K + 1))
        if self.K:
            X[:, 1:] = np.array(rows).reshape(len(rows), self.K)
        return X


def sort_by_id(stations: Sequence[Station]) -> list[Station]:
    return sorted(stations, key=lambda s: s.id)
