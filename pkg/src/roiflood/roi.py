"""
Optimal region of influence.

For a target catchment, every weight vector on an epsilon-truncated simplex
grid and every group size J in ``[min_J, max_J]`` defines a region (the J
nearest gauged stations under the weighted hydrological distance). A
regional GEV is fitted to each distinct region, and the candidate with the
smallest mean squared relative error between model quantiles and the
region's order statistics wins. Ties go to smaller J, then to the
lexicographically smaller weight vector.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import gev
from .distance import DistanceSpec, Neighborhood, make_spec, squared_components
from .errors import (
    InsufficientData,
    InsufficientPool,
    NoConvergedCandidate,
    NonConvergence,
    RankDeficientCovariates,
    ZeroObservation,
)
from .regional import RegionalModel, fit_regional, predict_params
from .station import CovariateSchema, Station

DEFAULT_MAX_J = 25

_FIT_ERRORS = (NonConvergence, InsufficientData, RankDeficientCovariates, ValueError,
               FloatingPointError)


@dataclass(frozen=True)
class RoiConfig:
    epsilon: float = 0.05
    min_J: int = 8
    max_J: int | None = None
    grid_step: float = 0.05
    tau: float = 2.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.min_J < 1:
            raise ValueError("min_J must be positive")
        if self.max_J is not None and self.max_J < self.min_J:
            raise ValueError("max_J must be at least min_J")
        if self.tau < 1:
            raise ValueError("tau must be at least 1")

    @classmethod
    def ungauged(cls, **kw) -> "RoiConfig":
        return cls(**{"epsilon": 0.05, "min_J": 8, **kw})

    @classmethod
    def atsite(cls, **kw) -> "RoiConfig":
        return cls(**{"epsilon": 0.05, "min_J": 7, "tau": 2.0, **kw})

    def J_range(self, pool_size: int) -> range:
        hi = min(self.max_J if self.max_J is not None else DEFAULT_MAX_J, pool_size)
        if self.min_J > hi:
            raise InsufficientPool(f"min_J={self.min_J} exceeds usable pool of {pool_size}")
        return range(self.min_J, hi + 1)


@dataclass(frozen=True, eq=False)
class RoiResult:
    weights: DistanceSpec
    J: int
    members: Neighborhood
    training_error: float
    model: RegionalModel
    # full search table: rows of the weight grid x J values, nan = failed fit
    grid: np.ndarray = field(default=None, repr=False)
    J_values: tuple[int, ...] = ()
    candidate_errors: np.ndarray = field(default=None, repr=False)
    n_fits: int = 0
    n_failed: int = 0


def weight_grid(K: int, epsilon: float, step: float) -> np.ndarray:
    """All weight vectors ``epsilon + step * n`` (n >= 0 integer) summing to one.

    Rows are in ascending lexicographic order. Raises if the free mass
    ``1 - (K + 1) epsilon`` is not a whole number of steps.
    """
    free = 1.0 - (K + 1) * epsilon
    if free < -1e-12:
        raise ValueError("epsilon * (K + 1) exceeds 1")
    M = round(free / step)
    if abs(M * step - free) > 1e-9:
        raise ValueError(f"grid_step {step} does not divide the free mass {free:g}")
    p = K + 1
    rows = []
    # stars and bars: bar positions among M + K slots
    for bars in itertools.combinations(range(M + p - 1), p - 1):
        edges = (-1,) + bars + (M + p - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(p)])
    n = np.array(rows, dtype=float).reshape(-1, p)
    W = epsilon + step * n
    W = W[np.lexsort(W.T[::-1])]
    # exact unit sum on the last component keeps DistanceSpec validation happy
    W[:, -1] = 1.0 - W[:, :-1].sum(axis=1)
    return W


# ---------------------------------------------------------------------------
# training error
# ---------------------------------------------------------------------------


def _station_sq_error(model: RegionalModel, station: Station) -> tuple[float, int]:
    x = np.sort(station.maxima)
    N = x.size
    if N == 0:
        raise InsufficientData(f"station {station.id} has no record")
    if np.any(x <= 0):
        raise ZeroObservation(f"station {station.id} has a non-positive order statistic")
    p = predict_params(model, station)
    q = gev._quantile(np.arange(1, N + 1) / (N + 1.0), p.mu, p.sigma, p.xi)
    return float(np.sum(((q - x) / x) ** 2)), N


def training_error(model: RegionalModel, region: Sequence[Station]) -> float:
    """Mean squared relative deviation of model quantiles from order statistics.

    The i-th ascending order statistic of a record of length N is compared
    with the model quantile at plotting position ``i / (N + 1)``.
    """
    total, count = 0.0, 0
    for st in region:
        e, n = _station_sq_error(model, st)
        total += e
        count += n
    return total / count


def atsite_training_error(
    model: RegionalModel,
    target: Station,
    region: Sequence[Station],
    tau: float,
) -> float:
    """Training error with the target's own term weighted by ``tau >= 1``."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    e0, n0 = _station_sq_error(model, target)
    total, count = tau * e0, n0
    for st in region:
        e, n = _station_sq_error(model, st)
        total += e
        count += n
    return total / count


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


class RegionCache:
    """Fitted regional models keyed by the sorted ids of the fitted stations.

    A cache is only valid for one fixed set of station records.
    """

    def __init__(self):
        self._models: dict[tuple[str, ...], RegionalModel | None] = {}

    def __len__(self):
        return len(self._models)

    def get(self, stations: Sequence[Station], schema: CovariateSchema) -> RegionalModel | None:
        key = (schema.names,) + tuple(sorted(s.id for s in stations))
        if key not in self._models:
            try:
                self._models[key] = fit_regional(stations, schema)
            except _FIT_ERRORS:
                self._models[key] = None
        return self._models[key]


def select_candidate(errors: np.ndarray) -> tuple[int, int]:
    """Row (weight vector) and column (J) of the smallest finite error.

    Ties go to the smaller J, then to the earlier row of the grid. NaN
    entries mark failed fits.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0 or np.all(np.isnan(errors)):
        raise NoConvergedCandidate("no candidate region produced a usable regional fit")
    # column-major flattening visits J first, then grid rows
    flat = np.where(np.isnan(errors), np.inf, errors).ravel(order="F")
    k = int(np.argmin(flat))
    return k % errors.shape[0], k // errors.shape[0]


def _search(
    target: Station,
    pool: Sequence[Station],
    config: RoiConfig,
    schema: CovariateSchema,
    atsite: bool,
    cache: RegionCache | None,
) -> RoiResult:
    cands = sorted((s for s in pool if s.id != target.id), key=lambda s: s.id)
    if len(cands) < config.min_J:
        raise InsufficientPool(f"pool of {len(cands)} is smaller than min_J={config.min_J}")
    J_values = tuple(config.J_range(len(cands)))
    W = weight_grid(schema.K, config.epsilon, config.grid_step)
    norm_set = cands + [target] if atsite else cands
    base = make_spec(norm_set, schema)
    comps = squared_components(target, cands, base)
    D2 = comps @ W.T  # (n_pool, n_weights)
    id_rank = np.arange(len(cands))  # cands are id-sorted
    cache = cache if cache is not None else RegionCache()

    errors = np.full((W.shape[0], len(J_values)), np.nan)
    region_error: dict[tuple[int, ...], float] = {}
    region_model: dict[tuple[int, ...], RegionalModel | None] = {}
    n_failed = 0
    for g in range(W.shape[0]):
        order = np.lexsort((id_rank, D2[:, g]))
        for jj, J in enumerate(J_values):
            key = tuple(sorted(order[:J].tolist()))
            if key not in region_error:
                region = [cands[i] for i in key]
                fit_set = region + [target] if atsite else region
                model = cache.get(fit_set, schema)
                err = np.nan
                if model is not None:
                    try:
                        if atsite:
                            err = atsite_training_error(model, target, region, config.tau)
                        else:
                            err = training_error(model, region)
                    except (ZeroObservation, ValueError, FloatingPointError):
                        err = np.nan
                if not np.isfinite(err):
                    n_failed += 1
                    err = np.nan
                region_error[key] = err
                region_model[key] = model
            errors[g, jj] = region_error[key]

    g, jj = select_candidate(errors)
    err = errors[g, jj]
    J = J_values[jj]
    spec = DistanceSpec(float(W[g, 0]), tuple(W[g, 1:]), base.norm_stats, schema)
    order = np.lexsort((id_rank, D2[:, g]))[:J]
    key = tuple(sorted(order.tolist()))
    members = Neighborhood(
        target.id,
        tuple(cands[i].id for i in order),
        tuple(float(math.sqrt(D2[i, g])) for i in order),
    )
    return RoiResult(
        weights=spec,
        J=J,
        members=members,
        training_error=float(err),
        model=region_model[key],
        grid=W,
        J_values=J_values,
        candidate_errors=errors,
        n_fits=len(region_error),
        n_failed=n_failed,
    )


def find_roi(
    target: Station,
    pool: Sequence[Station],
    config: RoiConfig,
    schema: CovariateSchema,
    cache: RegionCache | None = None,
) -> RoiResult:
    """Optimal region of influence for a (possibly ungauged) target.

    The training error is computed over the region's stations only; the
    target's own record, if any, is not used.
    """
    return _search(target, pool, config, schema, atsite=False, cache=cache)


def find_roi_atsite(
    target: Station,
    pool: Sequence[Station],
    config: RoiConfig,
    schema: CovariateSchema,
    cache: RegionCache | None = None,
    min_record: int = gev.MIN_RECORD,
) -> RoiResult:
    """Region of influence for a gauged target, fitted on target plus region.

    The search minimizes :func:`atsite_training_error` with ``config.tau``.
    """
    if target.n < min_record:
        raise InsufficientData(f"target {target.id} has {target.n} < {min_record} years")
    return _search(target, pool, config, schema, atsite=True, cache=cache)


def estimate_ungauged(
    target: Station,
    pool: Sequence[Station],
    config: RoiConfig,
    schema: CovariateSchema,
    T,
    cache: RegionCache | None = None,
):
    """T-year return level(s) at an ungauged target and the search result."""
    roi = find_roi(target, pool, config, schema, cache=cache)
    return gev.return_level(T, predict_params(roi.model, target)), roi

