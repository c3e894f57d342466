import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from roiflood.distance import (
    DistanceSpec,
    distance_matrix,
    hydro_distance,
    make_spec,
    nearest_neighbors,
    normalize_attributes,
    squared_components,
)
from roiflood.errors import InsufficientPool, ZeroVariance
from roiflood.station import CovariateSchema, Station


def simplex_weights(n):
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(lambda w: sum(w) > 1e-3).map(
        lambda w: np.asarray(w) / sum(w)
    )


def spec_with(stations, schema, w):
    base = make_spec(stations, schema)
    w = np.asarray(w, dtype=float)
    return DistanceSpec(float(w[0]), tuple(w[1:]), base.norm_stats, schema)


def distance_oracle(a, b, stations, schema, w):
    """Weighted distance written out term by term."""
    A = np.array([[s.attributes[k] for k in schema.names] for s in stations])
    mean, sd = A.mean(0), A.std(0, ddof=1)
    scale = np.std(pdist([[s.x, s.y] for s in stations]), ddof=1)
    total = w[0] * ((a.x - b.x) ** 2 + (a.y - b.y) ** 2) / scale**2
    for k, name in enumerate(schema.names):
        za = (a.attributes[name] - mean[k]) / sd[k]
        zb = (b.attributes[name] - mean[k]) / sd[k]
        total += w[k + 1] * (za - zb) ** 2
    return math.sqrt(total)


class TestNormalization:
    def test_sample_moments(self, basin, schema):
        stats = normalize_attributes(basin.stations, schema)
        A = np.array([[s.attributes[k] for k in schema.names] for s in basin.stations])
        np.testing.assert_allclose(stats.means, A.mean(0))
        np.testing.assert_allclose(stats.sds, A.std(0, ddof=1))
        coords = [[s.x, s.y] for s in basin.stations]
        assert stats.coord_scale == pytest.approx(np.std(pdist(coords), ddof=1))

    def test_constant_attribute(self, basin):
        stations = [Station(s.id, s.x, s.y, {"flat": 3.0}) for s in basin.stations]
        with pytest.raises(ZeroVariance):
            normalize_attributes(stations, CovariateSchema(("flat",)))

    def test_needs_two_stations(self, basin, schema):
        with pytest.raises(ValueError):
            normalize_attributes(basin.stations[:1], schema)


class TestSpec:
    def test_equal_weights_by_default(self, basin, schema):
        spec = make_spec(basin.stations, schema)
        np.testing.assert_allclose(spec.weights, np.full(5, 0.2))

    @pytest.mark.parametrize(
        "w0, w",
        [(0.5, (0.1, 0.1, 0.1, 0.1)), (-0.2, (0.3, 0.3, 0.3, 0.3)), (0.2, (0.4, 0.4))],
    )
    def test_invalid_weights(self, basin, schema, w0, w):
        stats = normalize_attributes(basin.stations, schema)
        with pytest.raises(ValueError):
            DistanceSpec(w0, w, stats, schema)


class TestDistance:
    @given(simplex_weights(5))
    def test_matches_term_by_term_oracle(self, basin, schema, w):
        spec = spec_with(basin.stations, schema, w)
        a, b = basin.stations[3], basin.stations[17]
        ref = distance_oracle(a, b, basin.stations, schema, spec.weights)
        assert hydro_distance(a, b, spec) == pytest.approx(ref, rel=1e-12)

    @given(simplex_weights(5))
    def test_metric_properties(self, basin, schema, w):
        spec = spec_with(basin.stations, schema, w)
        D = distance_matrix(basin.stations[:10], spec)
        np.testing.assert_allclose(D, D.T, atol=1e-12)
        assert np.all(np.diag(D) == 0)
        assert np.all(D[:, :, None] <= D[:, None, :] + D.T[None, :, :] + 1e-9)

    @given(simplex_weights(5))
    def test_components_reproduce_squared_distance(self, basin, schema, w):
        spec = spec_with(basin.stations, schema, w)
        target, pool = basin.stations[0], basin.stations[1:]
        comps = squared_components(target, pool, spec)
        d = np.array([hydro_distance(target, s, spec) for s in pool])
        np.testing.assert_allclose(comps @ spec.weights, d**2, rtol=1e-10, atol=1e-12)

    def test_pure_proximity(self, basin, schema):
        spec = spec_with(basin.stations, schema, [1.0, 0, 0, 0, 0])
        a, b = basin.stations[0], basin.stations[1]
        scale = spec.norm_stats.coord_scale
        assert hydro_distance(a, b, spec) == pytest.approx(math.hypot(a.x - b.x, a.y - b.y) / scale)


class TestNearestNeighbors:
    @given(simplex_weights(5), st.integers(1, 29))
    def test_brute_force_oracle(self, basin, schema, w, J):
        spec = spec_with(basin.stations, schema, w)
        target = basin.stations[7]
        nb = nearest_neighbors(target, basin.stations, spec, J)
        ranked = sorted(
            (s for s in basin.stations if s.id != target.id),
            key=lambda s: (hydro_distance(target, s, spec), s.id),
        )
        assert nb.members == tuple(s.id for s in ranked[:J])
        assert target.id not in nb.members
        assert list(nb.distances) == sorted(nb.distances)

    def test_ties_broken_by_id(self, schema):
        attrs = {k: 1.0 for k in schema.names}
        far = {k: 5.0 for k in schema.names}
        stations = [Station("T", 0.0, 0.0, attrs)]
        stations += [Station(sid, 1.0, 0.0, attrs) for sid in ("C", "A", "B")]
        stations += [Station("Z", 9.0, 9.0, far)]
        spec = make_spec(stations, schema)
        assert nearest_neighbors(stations[0], stations, spec, 3).members == ("A", "B", "C")

    def test_pool_too_small(self, basin, schema):
        spec = make_spec(basin.stations, schema)
        with pytest.raises(InsufficientPool):
            nearest_neighbors(basin.stations[0], basin.stations, spec, 30)
