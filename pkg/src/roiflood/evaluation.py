"""
Validation: leave-one-out ungauged evaluation, stratified year bootstrap,
and tabular plot data (return-level curves, QQ points, specific discharge).
"""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gev
from .baselines import cca_estimate, cluster_estimate
from .errors import EstimatorFailure, NonpositiveArea, RoiFloodError
from .gev import GevParams
from .regional import predict_params
from .roi import RegionCache, RoiConfig, estimate_ungauged, find_roi_atsite
from .station import CovariateSchema, Station, sort_by_id

log = logging.getLogger(__name__)

RETURN_LEVEL_COLUMNS = ("T", "level", "lower", "upper")
QQ_COLUMNS = ("p", "model_q", "empirical_q")
LOO_COLUMNS = ("station", "method", "T", "estimate", "baseline", "rel_dev")
AGGREGATE_COLUMNS = ("method", "T", "bias", "rmse", "n", "n_missing")

#: Failure rate of bootstrap replicates above which a run is aborted.
MAX_FAILURE_RATE = 0.05


# ---------------------------------------------------------------------------
# leave-one-out
# ---------------------------------------------------------------------------


@dataclass
class LooContext:
    """Shared state handed to every method during a leave-one-out run."""

    schema: CovariateSchema
    local_fits: dict[str, gev.FitResult]
    cache: RegionCache = field(default_factory=RegionCache)


@dataclass(frozen=True)
class RoiMethod:
    config: RoiConfig = field(default_factory=RoiConfig.ungauged)
    name: str = "roi"

    def __call__(self, target, pool, T, ctx: LooContext):
        levels, _ = estimate_ungauged(target, pool, self.config, ctx.schema, T, cache=ctx.cache)
        return np.atleast_1d(levels)


@dataclass(frozen=True)
class ClusterMethod:
    C: int = 4
    name: str = "cluster"

    def __call__(self, target, pool, T, ctx: LooContext):
        return cluster_estimate(target, pool, T, self.C, ctx.schema, ctx.local_fits)


@dataclass(frozen=True)
class CcaMethod:
    r: float = 1.5
    name: str = "cca"

    def __call__(self, target, pool, T, ctx: LooContext):
        return cca_estimate(target, pool, T, self.r, ctx.schema, ctx.local_fits)


@dataclass(frozen=True)
class OracleMethod:
    """Returns ``factor`` times the local baseline; for testing the metrics."""

    factor: float = 1.0
    name: str = "oracle"

    def __call__(self, target, pool, T, ctx: LooContext):
        return self.factor * np.atleast_1d(gev.return_level(T, ctx.local_fits[target.id].params))


@dataclass(frozen=True)
class LooRow:
    station: str
    method: str
    T: float
    estimate: float
    baseline: float
    rel_dev: float


@dataclass(frozen=True)
class LooAggregate:
    method: str
    T: float
    bias: float
    rmse: float
    n: int
    n_missing: int


@dataclass
class LooReport:
    rows: list[LooRow]
    aggregates: list[LooAggregate]
    failures: list[tuple[str, str, str]]

    def aggregate(self, method: str, T: float) -> LooAggregate:
        for a in self.aggregates:
            if a.method == method and a.T == float(T):
                return a
        raise KeyError((method, T))


def aggregate_rows(rows: Sequence[LooRow], methods: Sequence[str], T_grid, n_stations: int):
    """Relative bias and RMSE per (method, T) from per-station rows."""
    out = []
    for name in methods:
        for T in T_grid:
            d = np.array([r.rel_dev for r in rows if r.method == name and r.T == float(T)])
            n = d.size
            bias = float(np.mean(d)) if n else math.nan
            rmse = float(math.sqrt(np.mean(d**2))) if n else math.nan
            out.append(LooAggregate(name, float(T), bias, rmse, n, n_stations - n))
    return out


def _method_name(method) -> str:
    return getattr(method, "name", getattr(method, "__name__", repr(method)))


def _loo_fold(args):
    j, stations, methods, T_grid, ctx = args
    target = stations[j]
    pool = stations[:j] + stations[j + 1 :]
    baseline = np.atleast_1d(gev.return_level(T_grid, ctx.local_fits[target.id].params))
    rows, failures = [], []
    for method in methods:
        name = _method_name(method)
        try:
            est = np.asarray(method(target.ungauged(), pool, T_grid, ctx), dtype=float)
            if est.shape != baseline.shape or not np.all(np.isfinite(est)):
                raise ValueError("method returned invalid estimates")
        except (RoiFloodError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures.append((target.id, name, f"{type(exc).__name__}: {exc}"))
            continue
        for T, e, b in zip(T_grid, est, baseline):
            rows.append(LooRow(target.id, name, float(T), float(e), float(b), float((e - b) / b)))
    return rows, failures


def loo_evaluate(
    stations: Sequence[Station],
    methods: Sequence[Callable],
    T_grid,
    schema: CovariateSchema,
    local_fits: dict[str, gev.FitResult] | None = None,
    n_jobs: int = 1,
) -> LooReport:
    """Treat each station in turn as ungauged and score every method.

    The reference at each station is its local GEV return level. Method
    failures become missing rows and are counted per aggregate.
    """
    stations = sort_by_id(stations)
    T_grid = np.atleast_1d(np.asarray(T_grid, dtype=float))
    if local_fits is None:
        local_fits = local_fit_all(stations)
    ctx = LooContext(schema, dict(local_fits))
    tasks = [(j, stations, list(methods), T_grid, ctx) for j in range(len(stations))]
    if n_jobs > 1:
        # each worker has its own region cache; fits do not depend on cache history
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_loo_fold, tasks))
    else:
        results = [_loo_fold(t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    failures = [f for _, fs in results for f in fs]
    names = [_method_name(m) for m in methods]
    return LooReport(rows, aggregate_rows(rows, names, T_grid, len(stations)), failures)


def local_fit_all(stations: Sequence[Station], min_record: int = gev.MIN_RECORD):
    return {s.id: gev.fit_local(s.maxima, min_record=min_record) for s in stations}


def _tune(stations, schema, make, values, T, local_fits):
    best = None
    for v in values:
        rep = loo_evaluate(stations, [make(v)], [T], schema, local_fits)
        agg = rep.aggregates[0]
        score = (agg.n_missing, agg.rmse if np.isfinite(agg.rmse) else math.inf)
        if best is None or score < best[0]:
            best = (score, v)
    return best[1]


def tune_cluster_count(stations, schema, T=100.0, values=range(2, 11), local_fits=None) -> int:
    """Cluster count with the lowest leave-one-out RMSE at ``T``.

    Counts that leave some station without a usable cluster rank behind
    counts without failures.
    """
    values = [c for c in values if c <= len(stations) - 1]
    local_fits = local_fits or local_fit_all(stations)
    return _tune(stations, schema, ClusterMethod, values, T, local_fits)


def tune_cca_radius(stations, schema, T=100.0, values=(0.5, 1.0, 1.5, 2.0, 3.0), local_fits=None) -> float:
    """CCA radius with the lowest leave-one-out RMSE at ``T``."""
    local_fits = local_fits or local_fit_all(stations)
    return _tune(stations, schema, CcaMethod, values, T, local_fits)


# ---------------------------------------------------------------------------
# stratified bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Strata:
    """Disjoint, ordered, covering year intervals (inclusive bounds)."""

    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        iv = tuple((int(a), int(b)) for a, b in self.intervals)
        if not iv:
            raise ValueError("need at least one stratum")
        for (a, b), nxt in zip(iv, iv[1:] + (None,)):
            if a > b:
                raise ValueError(f"empty stratum {a}-{b}")
            if nxt is not None and nxt[0] != b + 1:
                raise ValueError("strata must be contiguous and ordered")
        object.__setattr__(self, "intervals", iv)

    @property
    def span(self) -> tuple[int, int]:
        return self.intervals[0][0], self.intervals[-1][1]

    @classmethod
    def default(cls, stations: Sequence[Station], n: int = 4) -> "Strata":
        """``n`` near-equal consecutive blocks of the pooled year range."""
        years = np.concatenate([s.years for s in stations if s.n])
        lo, hi = int(years.min()), int(years.max())
        n = max(1, min(n, hi - lo + 1))
        edges = np.linspace(lo, hi + 1, n + 1)
        cuts = np.round(edges).astype(int)
        return cls(tuple((int(cuts[i]), int(cuts[i + 1]) - 1) for i in range(n)))

    @classmethod
    def yearly(cls, stations: Sequence[Station]) -> "Strata":
        years = np.concatenate([s.years for s in stations if s.n])
        return cls(tuple((y, y) for y in range(int(years.min()), int(years.max()) + 1)))


def resample_years(stations: Sequence[Station], strata: Strata, rng: np.random.Generator) -> list[Station]:
    """One stratified bootstrap data set.

    Every calendar year of each stratum is replaced by a year drawn with
    replacement from the same stratum, carrying the full cross-section of
    stations observed in the drawn year. A station not gauged in a drawn
    year simply has no value for that slot.
    """
    lo, hi = strata.span
    slots = np.arange(lo, hi + 1)
    drawn = np.empty_like(slots)
    for a, b in strata.intervals:
        idx = (slots >= a) & (slots <= b)
        drawn[idx] = rng.integers(a, b + 1, size=int(idx.sum()))
    out = []
    for s in stations:
        lookup = dict(zip(s.years.tolist(), s.maxima.tolist()))
        keep = [i for i, d in enumerate(drawn.tolist()) if d in lookup]
        out.append(s.with_record(slots[keep], [lookup[int(drawn[i])] for i in keep]))
    return out


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    R: int
    estimates: np.ndarray  # (successful replicates, n_outputs)
    alpha: float
    lower: np.ndarray
    upper: np.ndarray
    n_failed: int = 0
    point: np.ndarray | None = None

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def _ids(station_ids) -> tuple[str, ...]:
    return (station_ids,) if isinstance(station_ids, str) else tuple(station_ids)


@dataclass(frozen=True)
class LocalEstimator:
    """Return levels at each of ``station_ids`` from its own record.

    Output is station-major: all ``T`` for the first station, then the next.
    """

    station_ids: tuple[str, ...]
    T: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "station_ids", _ids(self.station_ids))

    def __call__(self, stations: Sequence[Station]) -> np.ndarray:
        by_id = {s.id: s for s in stations}
        T = np.asarray(self.T, dtype=float)
        return np.concatenate([
            np.atleast_1d(gev.return_level(T, gev.fit_local(by_id[sid].maxima).params))
            for sid in self.station_ids
        ])


@dataclass(frozen=True)
class AtsiteEstimator:
    """Return levels at each of ``station_ids`` from its optimal at-site region.

    The search is repeated on every data set the estimator is called with;
    the targets of one call share a region cache.
    """

    station_ids: tuple[str, ...]
    T: tuple[float, ...]
    config: RoiConfig
    schema: CovariateSchema

    def __post_init__(self):
        object.__setattr__(self, "station_ids", _ids(self.station_ids))

    def __call__(self, stations: Sequence[Station]) -> np.ndarray:
        by_id = {s.id: s for s in stations}
        T = np.asarray(self.T, dtype=float)
        cache = RegionCache()
        out = []
        for sid in self.station_ids:
            target = by_id[sid]
            roi = find_roi_atsite(target, stations, self.config, self.schema, cache=cache)
            out.append(np.atleast_1d(gev.return_level(T, predict_params(roi.model, target))))
        return np.concatenate(out)


def _replicate(args):
    r, stations, strata, estimator, seed = args
    rng = np.random.default_rng(seed + r)
    data = resample_years(stations, strata, rng)
    try:
        return np.atleast_1d(np.asarray(estimator(data), dtype=float))
    except (RoiFloodError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.debug("bootstrap replicate %d failed: %s", r, exc)
        return None


def stratified_bootstrap(
    stations: Sequence[Station],
    strata: Strata | None,
    R: int,
    estimator: Callable[[list[Station]], object],
    alpha: float = 0.05,
    seed: int = 0,
    n_jobs: int = 1,
    point: bool = False,
) -> BootstrapResult:
    """Percentile bootstrap intervals from year-stratified resampling.

    Replicate ``r`` uses the generator seeded with ``seed + r``, so results
    do not depend on ``n_jobs``. Failed replicates are dropped with a
    warning below a 5% failure rate; above it :class:`EstimatorFailure` is
    raised.
    """
    if R < 100:
        raise ValueError("R must be at least 100")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    stations = list(stations)
    strata = strata or Strata.default(stations)
    tasks = [(r, stations, strata, estimator, seed) for r in range(R)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_replicate, tasks, chunksize=max(1, R // (4 * n_jobs))))
    else:
        results = [_replicate(t) for t in tasks]
    ok = [e for e in results if e is not None]
    n_failed = R - len(ok)
    if n_failed:
        if n_failed / R >= MAX_FAILURE_RATE:
            raise EstimatorFailure(f"{n_failed} of {R} bootstrap replicates failed")
        warnings.warn(f"{n_failed} of {R} bootstrap replicates failed and were dropped", stacklevel=2)
    est = np.vstack(ok)
    lower, upper = np.quantile(est, [alpha / 2, 1 - alpha / 2], axis=0)
    pt = np.atleast_1d(np.asarray(estimator(stations), dtype=float)) if point else None
    return BootstrapResult(R, est, alpha, lower, upper, n_failed, pt)


# ---------------------------------------------------------------------------
# plot tables
# ---------------------------------------------------------------------------


def default_T_grid(n: int = 40, T_max: float = 1000.0) -> np.ndarray:
    return np.geomspace(1.5, T_max, n)


def emit_return_level_curve(params: GevParams, T=None, bootstrap: BootstrapResult | None = None):
    """Rows ``(T, level, lower, upper)`` on a log-spaced return-period grid.

    ``bootstrap`` must hold replicate return levels on the same grid. Its
    percentile bounds are widened, if needed, to contain the point level.
    """
    T = default_T_grid() if T is None else np.asarray(T, dtype=float)
    level = np.atleast_1d(gev.return_level(T, params))
    if bootstrap is not None:
        if bootstrap.lower.shape != level.shape:
            raise ValueError("bootstrap estimates do not match the T grid")
        lower = np.minimum(bootstrap.lower, level)
        upper = np.maximum(bootstrap.upper, level)
    else:
        lower = upper = np.full(level.shape, math.nan)
    return [(float(t), float(l), float(a), float(b)) for t, l, a, b in zip(T, level, lower, upper)]


def emit_qq(params: GevParams, maxima) -> list[tuple[float, float, float]]:
    """Rows ``(p, model_q, empirical_q)`` at plotting positions ``i / (N + 1)``."""
    x = np.sort(np.asarray(maxima, dtype=float))
    if x.size == 0:
        raise ValueError("empty record")
    p = np.arange(1, x.size + 1) / (x.size + 1.0)
    q = np.atleast_1d(gev.gev_quantile(p, params))
    return [(float(a), float(b), float(c)) for a, b, c in zip(p, q, x)]


def specific_discharge(q, catchment_size):
    """Discharge per unit catchment area (m3/s per km2)."""
    size = np.asarray(catchment_size, dtype=float)
    if np.any(~(size > 0)):
        raise NonpositiveArea("catchment size must be strictly positive")
    out = np.asarray(q, dtype=float) / size
    return out[()] if out.ndim == 0 else out
