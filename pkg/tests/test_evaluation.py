import math
import warnings
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roiflood import gev
from roiflood.errors import EstimatorFailure, NonpositiveArea
from roiflood.evaluation import (
    AtsiteEstimator,
    ClusterMethod,
    LocalEstimator,
    OracleMethod,
    Strata,
    emit_qq,
    emit_return_level_curve,
    local_fit_all,
    loo_evaluate,
    resample_years,
    specific_discharge,
    stratified_bootstrap,
    tune_cca_radius,
    tune_cluster_count,
)
from roiflood.gev import GevParams
from roiflood.roi import RoiConfig
from roiflood.station import CovariateSchema, Station


@dataclass(frozen=True)
class FlakyMethod:
    """Fails on the listed targets, otherwise returns the local baseline."""

    bad: tuple[str, ...]
    name: str = "flaky"

    def __call__(self, target, pool, T, ctx):
        if target.id in self.bad:
            raise ValueError("no region")
        return np.atleast_1d(gev.return_level(T, ctx.local_fits[target.id].params))


@dataclass(frozen=True)
class FailWhen:
    """Local estimator rejecting a deterministic share of resamples."""

    modulus: int
    threshold: int

    def __call__(self, stations):
        x = stations[0].maxima
        if int(np.sum(x * 1e6)) % self.modulus < self.threshold:
            raise ValueError("rejected replicate")
        return gev.return_level(50, gev.fit_local(x).params)


@pytest.fixture(scope="module")
def fits(small_basin):
    return local_fit_all(small_basin.stations)


class TestLoo:
    def test_perfect_method_has_no_error(self, small_basin, schema, fits):
        rep = loo_evaluate(small_basin.stations, [OracleMethod(1.0)], [50, 100], schema, fits)
        for agg in rep.aggregates:
            assert agg.bias == 0.0 and agg.rmse == 0.0 and agg.n == 12 and agg.n_missing == 0

    def test_constant_factor(self, small_basin, schema, fits):
        rep = loo_evaluate(small_basin.stations, [OracleMethod(1.1)], [100], schema, fits)
        agg = rep.aggregate("oracle", 100)
        assert agg.bias == pytest.approx(0.1, rel=1e-12)
        assert agg.rmse == pytest.approx(0.1, rel=1e-12)

    def test_rows_and_baseline(self, small_basin, schema, fits):
        rep = loo_evaluate(small_basin.stations, [OracleMethod(0.8)], [20, 50], schema, fits)
        assert len(rep.rows) == 24
        for r in rep.rows:
            assert r.baseline == pytest.approx(gev.return_level(r.T, fits[r.station].params))
            assert r.rel_dev == pytest.approx((r.estimate - r.baseline) / r.baseline)

    def test_failures_become_missing(self, small_basin, schema, fits):
        bad = (small_basin.stations[2].id, small_basin.stations[5].id)
        rep = loo_evaluate(small_basin.stations, [FlakyMethod(bad), OracleMethod(1.0)], [100], schema, fits)
        flaky = rep.aggregate("flaky", 100)
        assert flaky.n == 10 and flaky.n_missing == 2
        assert rep.aggregate("oracle", 100).n_missing == 0
        assert sorted(f[0] for f in rep.failures) == sorted(bad)

    def test_parallel_matches_serial(self, small_basin, schema, fits):
        methods = [ClusterMethod(3), OracleMethod(1.2)]
        a = loo_evaluate(small_basin.stations, methods, [50, 100], schema, fits)
        b = loo_evaluate(small_basin.stations, methods, [50, 100], schema, fits, n_jobs=2)
        assert a.rows == b.rows and a.aggregates == b.aggregates

    def test_station_order_irrelevant(self, small_basin, schema, fits):
        a = loo_evaluate(small_basin.stations, [ClusterMethod(3)], [100], schema, fits)
        b = loo_evaluate(small_basin.stations[::-1], [ClusterMethod(3)], [100], schema, fits)
        assert a.rows == b.rows

    def test_tuning_returns_candidate(self, small_basin, schema, fits):
        assert tune_cluster_count(small_basin.stations, schema, local_fits=fits, values=range(2, 6)) in range(2, 6)
        assert tune_cca_radius(small_basin.stations, schema, local_fits=fits) in (0.5, 1.0, 1.5, 2.0, 3.0)


def coded_basin():
    """Stations whose values encode (year, station) so resampled slots can be traced."""
    out = []
    for j, (lo, hi) in enumerate([(1950, 2009), (1970, 2009), (1950, 1989)]):
        years = np.arange(lo, hi + 1)
        out.append(Station(f"S{j}", 0.0, 0.0, {}, years, years * 10.0 + j))
    return out


class TestStrata:
    def test_default_blocks_cover_range(self, small_basin):
        s = Strata.default(small_basin.stations, 4)
        years = np.concatenate([st.years for st in small_basin.stations])
        assert s.span == (years.min(), years.max())
        sizes = [b - a + 1 for a, b in s.intervals]
        assert len(sizes) == 4 and max(sizes) - min(sizes) <= 1

    @pytest.mark.parametrize("iv", [(), ((2000, 1990),), ((1990, 1999), (2001, 2010)), ((1990, 2000), (2000, 2010))])
    def test_invalid(self, iv):
        with pytest.raises(ValueError):
            Strata(iv)

    def test_yearly(self, small_basin):
        s = Strata.yearly(small_basin.stations)
        assert all(a == b for a, b in s.intervals)


class TestResample:
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_cross_section_and_strata(self, seed, n):
        stations = coded_basin()
        strata = Strata.default(stations, n)
        data = resample_years(stations, strata, np.random.default_rng(seed))
        slot_source = {}
        for j, (orig, new) in enumerate(zip(stations, data)):
            src_years = np.floor(new.maxima / 10.0).astype(int)
            np.testing.assert_array_equal(np.round(new.maxima - src_years * 10.0), j)
            assert set(src_years) <= set(orig.years.tolist())
            for slot, src in zip(new.years.tolist(), src_years.tolist()):
                # every station observed in a drawn year reports that same year
                assert slot_source.setdefault(slot, src) == src
                stratum = next(iv for iv in strata.intervals if iv[0] <= slot <= iv[1])
                assert stratum[0] <= src <= stratum[1]

    def test_yearly_strata_reproduce_data(self):
        stations = coded_basin()
        data = resample_years(stations, Strata.yearly(stations), np.random.default_rng(0))
        for a, b in zip(stations, data):
            np.testing.assert_array_equal(a.years, b.years)
            np.testing.assert_array_equal(a.maxima, b.maxima)


class TestBootstrap:
    def test_needs_enough_replicates(self, small_basin):
        with pytest.raises(ValueError):
            stratified_bootstrap(small_basin.stations, None, 99, LocalEstimator("S001", (50.0,)))

    def test_percentile_bounds(self, small_basin):
        res = stratified_bootstrap(small_basin.stations, None, 200, LocalEstimator("S001", (10.0, 50.0)), seed=3)
        assert res.estimates.shape == (200, 2) and res.n_failed == 0
        lo, hi = np.quantile(res.estimates, [0.025, 0.975], axis=0)
        np.testing.assert_array_equal(res.lower, lo)
        np.testing.assert_array_equal(res.upper, hi)
        assert np.all(res.width > 0)

    def test_replicate_seeds(self, small_basin):
        est = LocalEstimator(("S002", "S003"), (100.0,))
        res = stratified_bootstrap(small_basin.stations, None, 100, est, seed=7)
        strata = Strata.default(small_basin.stations)
        for r in (0, 42, 99):
            data = resample_years(small_basin.stations, strata, np.random.default_rng(7 + r))
            np.testing.assert_array_equal(res.estimates[r], est(data))

    def test_independent_of_jobs(self, small_basin):
        est = LocalEstimator("S004", (50.0, 200.0))
        a = stratified_bootstrap(small_basin.stations, None, 120, est, seed=1)
        b = stratified_bootstrap(small_basin.stations, None, 120, est, seed=1, n_jobs=3)
        np.testing.assert_array_equal(a.estimates, b.estimates)

    def test_rare_failures_dropped_with_warning(self, small_basin):
        est = FailWhen(100, 2)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            res = stratified_bootstrap(small_basin.stations, None, 200, est, seed=0)
        assert 0 < res.n_failed < 10
        assert res.estimates.shape[0] == 200 - res.n_failed
        assert any("dropped" in str(x.message) for x in w)

    def test_frequent_failures_raise(self, small_basin):
        with pytest.raises(EstimatorFailure):
            stratified_bootstrap(small_basin.stations, None, 100, FailWhen(2, 1), seed=0)

    def test_point_estimate(self, small_basin):
        est = LocalEstimator("S001", (50.0,))
        res = stratified_bootstrap(small_basin.stations, None, 100, est, point=True)
        np.testing.assert_array_equal(res.point, est(small_basin.stations))

    def test_atsite_estimator(self, small_basin):
        schema = CovariateSchema(("size_km2",))
        cfg = RoiConfig.atsite(epsilon=0.1, min_J=4, max_J=6, grid_step=0.4)
        out = AtsiteEstimator(("S001", "S002"), (50.0, 100.0), cfg, schema)(small_basin.stations)
        assert out.shape == (4,) and out[0] < out[1] and out[2] < out[3]


class TestTables:
    def test_return_level_curve(self):
        p = GevParams(100.0, 30.0, 0.1)
        rows = emit_return_level_curve(p, [2, 10, 100])
        np.testing.assert_allclose([r[1] for r in rows], gev.return_level([2, 10, 100], p))
        assert all(math.isnan(r[2]) and math.isnan(r[3]) for r in rows)

    def test_curve_bounds_contain_point(self, small_basin):
        s = small_basin.stations[0]
        T = np.array([5.0, 50.0, 500.0])
        est = LocalEstimator(s.id, tuple(T))
        boot = stratified_bootstrap(small_basin.stations, None, 100, est)
        p = gev.fit_local(s.maxima).params
        for t, level, lo, hi in emit_return_level_curve(p, T, boot):
            assert lo <= level <= hi

    def test_curve_grid_mismatch(self, small_basin):
        boot = stratified_bootstrap(small_basin.stations, None, 100, LocalEstimator("S001", (50.0,)))
        with pytest.raises(ValueError):
            emit_return_level_curve(GevParams(1, 1, 0), [10, 20], boot)

    def test_qq(self):
        x = np.array([5.0, 1.0, 3.0])
        p = GevParams(2.0, 1.0, 0.0)
        rows = emit_qq(p, x)
        assert [r[0] for r in rows] == [0.25, 0.5, 0.75]
        assert [r[2] for r in rows] == [1.0, 3.0, 5.0]
        assert rows[1][1] == pytest.approx(gev.gev_quantile(0.5, p))

    def test_specific_discharge(self):
        assert specific_discharge(500.0, 250.0) == 2.0
        np.testing.assert_allclose(specific_discharge([10.0, 20.0], [5.0, 4.0]), [2.0, 5.0])
        for bad in (0.0, -3.0, math.nan):
            with pytest.raises(NonpositiveArea):
                specific_discharge(1.0, bad)
