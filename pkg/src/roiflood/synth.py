"""
Synthetic river basins with known regional GEV structure.

Stations get log-uniform catchment attributes, GEV parameters through the
log-linear links (optionally bent by quadratic terms in the centred
log-attributes), and ragged annual-maximum records drawn by inverse CDF.
Cross-station dependence comes from a common-shock mixture: each station-year
uses the year's common uniform with probability ``dependence`` and its own
uniform otherwise, so every margin stays exactly GEV.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import gev, io
from .gev import GevParams
from .station import DEFAULT_ATTRIBUTES, CovariateSchema, Station

# ranges chosen so log-uniform means sit near typical alpine-basin values
DEFAULT_RANGES = {
    "size_km2": (10.0, 10000.0),
    "altitude_m": (400.0, 2500.0),
    "mean_daily_precip_mm": (2.5, 6.5),
    "mean_annmax_precip_mm": (35.0, 90.0),
}


@dataclass(frozen=True)
class SynthConfig:
    m: int = 30
    record_length: tuple[int, int] = (30, 90)
    last_year: int = 2015
    alpha: tuple[float, ...] = (-3.0, 0.75, 0.1, 0.5, 0.3)
    beta: tuple[float, ...] = (-4.0, 0.7, 0.1, 0.5, 0.3)
    xi: float = 0.1
    attribute_names: tuple[str, ...] = DEFAULT_ATTRIBUTES
    attribute_ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    # curvature of log mu / log sigma in each centred log-attribute
    alpha_quad: tuple[float, ...] | None = None
    beta_quad: tuple[float, ...] | None = None
    extent_m: tuple[float, float] = (200_000.0, 150_000.0)
    dependence: float = 0.0
    seed: int = 0

    def __post_init__(self):
        K = len(self.attribute_names)
        if len(self.alpha) != K + 1 or len(self.beta) != K + 1:
            raise ValueError("alpha and beta need one intercept plus one slope per attribute")
        for quad in (self.alpha_quad, self.beta_quad):
            if quad is not None and len(quad) != K:
                raise ValueError("quadratic terms need one entry per attribute")
        if not gev.XI_BOUNDS[0] < self.xi < gev.XI_BOUNDS[1]:
            raise ValueError("xi must lie in (-0.5, 1)")
        if not 0.0 <= self.dependence <= 1.0:
            raise ValueError("dependence must lie in [0, 1]")
        lo, hi = self.record_length
        if not 1 <= lo <= hi:
            raise ValueError("record_length must be an increasing pair of positive ints")
        for name in self.attribute_names:
            a, b = self.attribute_ranges[name]
            if not 0 < a <= b:
                raise ValueError(f"range for {name} must be positive and ordered")
        if self.m < 1:
            raise ValueError("m must be positive")

    @property
    def schema(self) -> CovariateSchema:
        return CovariateSchema(self.attribute_names)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attribute_ranges"] = {k: list(v) for k, v in self.attribute_ranges.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for key in ("record_length", "alpha", "beta", "alpha_quad", "beta_quad", "extent_m",
                    "attribute_names"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "attribute_ranges" in d:
            d["attribute_ranges"] = {k: tuple(v) for k, v in d["attribute_ranges"].items()}
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SynthBasin:
    config: SynthConfig
    stations: list[Station]
    true_params: dict[str, GevParams]

    def station(self, sid: str) -> Station:
        for s in self.stations:
            if s.id == sid:
                return s
        raise KeyError(sid)


def link_params(config: SynthConfig, attributes) -> GevParams:
    """True GEV parameters for an attribute vector (mapping or schema-ordered)."""
    ly = np.log(config.schema.values(attributes))
    log_mu = config.alpha[0] + float(np.dot(config.alpha[1:], ly))
    log_sigma = config.beta[0] + float(np.dot(config.beta[1:], ly))
    if config.alpha_quad is not None or config.beta_quad is not None:
        centre = np.array(
            [0.5 * sum(math.log(v) for v in config.attribute_ranges[k]) for k in config.attribute_names]
        )
        dev2 = (ly - centre) ** 2
        if config.alpha_quad is not None:
            log_mu += float(np.dot(config.alpha_quad, dev2))
        if config.beta_quad is not None:
            log_sigma += float(np.dot(config.beta_quad, dev2))
    return GevParams(math.exp(log_mu), math.exp(log_sigma), config.xi)


def generate_basin(config: SynthConfig) -> SynthBasin:
    """Draw a basin; identical configs give bitwise-identical basins."""
    rng = np.random.default_rng(config.seed)
    m = config.m
    names = config.attribute_names

    attrs = np.empty((m, len(names)))
    for k, name in enumerate(names):
        lo, hi = config.attribute_ranges[name]
        attrs[:, k] = np.exp(rng.uniform(math.log(lo), math.log(hi), size=m))
    coords = rng.uniform(0.0, 1.0, size=(m, 2)) * np.asarray(config.extent_m)
    lo, hi = config.record_length
    lengths = rng.integers(lo, hi + 1, size=m)

    n_years = int(hi)
    first_year = config.last_year - n_years + 1
    common = rng.random(n_years)
    own = rng.random((n_years, m))
    use_common = rng.random((n_years, m)) < config.dependence
    u = np.where(use_common, common[:, None], own)
    u = np.clip(u, np.finfo(float).tiny, None)

    width = len(str(m))
    stations, truth = [], {}
    for j in range(m):
        sid = f"S{j + 1:0{max(width, 3)}d}"
        a = {name: float(attrs[j, k]) for k, name in enumerate(names)}
        p = link_params(config, a)
        rows = np.arange(n_years - lengths[j], n_years)
        years = first_year + rows
        maxima = gev._quantile(u[rows, j], p.mu, p.sigma, p.xi)
        stations.append(Station(sid, float(coords[j, 0]), float(coords[j, 1]), a, years, maxima))
        truth[sid] = p
    return SynthBasin(config, stations, truth)


def true_quantile(basin: SynthBasin, station, T):
    """Generator-true T-year return level at a station (object or id)."""
    sid = station.id if isinstance(station, Station) else station
    return gev.return_level(T, basin.true_params[sid])


def save_basin(basin: SynthBasin, directory) -> tuple[Path, Path]:
    """Write ``stations.csv`` and ``maxima.csv`` in the ingestion schema."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sp = directory / "stations.csv"
    mp = directory / "maxima.csv"
    io.write_stations(basin.stations, sp)
    io.write_maxima(basin.stations, mp)
    return sp, mp
