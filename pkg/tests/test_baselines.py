import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.cluster.hierarchy import cut_tree, linkage

from roiflood.baselines import (
    assign_ungauged,
    cca,
    cca_distances,
    cca_estimate,
    cca_roi,
    cluster_estimate,
    discharge_characteristics,
    fit_cca,
    grown_cluster,
    ward_cluster,
    _ward_merges,
    _cut,
)
from roiflood.distance import features, make_spec
from roiflood.errors import EmptyRegion, SingularCovariance
from roiflood.evaluation import local_fit_all
from roiflood.gev import sample_lmoments

# continuous draws: tied merge costs have probability zero
point_sets = st.builds(
    lambda seed, m, d: np.random.default_rng(seed).normal(size=(m, d)),
    st.integers(0, 2**32 - 1),
    st.integers(3, 14),
    st.integers(1, 4),
)


def as_partition(labels):
    groups = {}
    for i, l in enumerate(labels):
        groups.setdefault(int(l), set()).add(i)
    return sorted(map(frozenset, groups.values()), key=min)


def within_ss(P, labels):
    return sum(np.sum((P[labels == c] - P[labels == c].mean(0)) ** 2) for c in np.unique(labels))


class TestWard:
    @given(point_sets)
    def test_matches_scipy_linkage(self, P):
        Z = linkage(P, method="ward")
        ours = np.array(_ward_merges(P))
        np.testing.assert_allclose(np.sqrt(2 * ours[:, 2]), Z[:, 2], rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(ours[:, :2], Z[:, :2])
        np.testing.assert_array_equal(ours[:, 3], Z[:, 3])

    @given(point_sets, st.integers(1, 14))
    def test_cut_matches_scipy(self, P, C):
        m = P.shape[0]
        C = min(C, m)
        Z = linkage(P, method="ward")
        ours = _cut(_ward_merges(P), m, C)
        ref = cut_tree(Z, n_clusters=C).ravel()
        assert as_partition(ours) == as_partition(ref)

    def test_increase_is_within_ss_growth(self):
        P = np.random.default_rng(0).normal(size=(12, 3))
        history = _ward_merges(P)
        prev = 0.0
        for C in range(11, 0, -1):
            ss = within_ss(P, _cut(history, 12, C))
            assert ss - prev == pytest.approx(history[12 - C - 1][2], rel=1e-10)
            prev = ss

    def test_clustering_object(self, basin, schema):
        spec = make_spec(basin.stations, schema)
        cl = ward_cluster(basin.stations[::-1], spec, 4)
        assert cl.station_ids == tuple(sorted(s.id for s in basin.stations))
        assert sorted(set(cl.assignment.values())) == [0, 1, 2, 3]
        P = features(sorted(basin.stations, key=lambda s: s.id), spec)
        labels = np.array([cl.assignment[sid] for sid in cl.station_ids])
        for c in range(4):
            np.testing.assert_allclose(cl.centroids[c], P[labels == c].mean(0))

    @pytest.mark.parametrize("C", [0, 31])
    def test_invalid_count(self, basin, schema, C):
        with pytest.raises(ValueError):
            ward_cluster(basin.stations, make_spec(basin.stations, schema), C)

    def test_assign_to_nearest_centroid(self, basin, schema):
        pool, target = basin.stations[1:], basin.stations[0]
        spec = make_spec(pool, schema)
        cl = ward_cluster(pool, spec, 5)
        f = features([target], spec)[0]
        d = [np.sum((c - f) ** 2) for c in cl.centroids]
        assert assign_ungauged(cl, target, spec) == int(np.argmin(d))

    def test_grown_cluster(self, basin, schema):
        spec = make_spec(basin.stations, schema)
        cl = ward_cluster(basin.stations, spec, 8)
        for c in range(8):
            own = set(cl.members(c))
            assert set(grown_cluster(cl, c, 1)) == own
            grown = set(grown_cluster(cl, c, 6))
            assert own <= grown and len(grown) >= 6
            # the grown set is a whole cluster of some coarser cut
            coarser = [ward_cluster(basin.stations, spec, k) for k in range(1, 9)]
            assert any(grown == set(k.members(j)) for k in coarser for j in range(k.C))


def cca_oracle(X, Y):
    """Canonical correlations and attribute weights by QR + SVD."""
    n = X.shape[0]
    Qx, Rx = np.linalg.qr(X - X.mean(0))
    Qy, Ry = np.linalg.qr(Y - Y.mean(0))
    U, s, _ = np.linalg.svd(Qx.T @ Qy)
    d = min(X.shape[1], Y.shape[1])
    A = np.linalg.solve(Rx, U[:, :d]) * math.sqrt(n - 1)
    return s[:d], A


class TestCca:
    @pytest.fixture
    def blocks(self):
        rng = np.random.default_rng(5)
        n = 60
        latent = rng.normal(size=(n, 2))
        X = np.column_stack([latent, rng.normal(size=(n, 2))]) + 0.3 * rng.normal(size=(n, 4))
        Y = np.column_stack([latent[:, 0] + 0.5 * rng.normal(size=n), latent[:, 1], rng.normal(size=n)])
        return X, Y

    def test_matches_qr_svd_oracle(self, blocks):
        X, Y = blocks
        model = cca(X, Y)
        rho, A = cca_oracle(X, Y)
        np.testing.assert_allclose(model.rho, rho, rtol=1e-9)
        for k in range(len(rho)):
            sign = np.sign(model.A[:, k] @ A[:, k])
            np.testing.assert_allclose(model.A[:, k], sign * A[:, k], rtol=1e-7, atol=1e-9)

    def test_score_properties(self, blocks):
        X, Y = blocks
        model = cca(X, Y)
        U, V = model.attribute_scores(X), model.discharge_scores(Y)
        np.testing.assert_allclose(np.cov(U.T), np.eye(3), atol=1e-10)
        np.testing.assert_allclose(np.cov(V.T), np.eye(3), atol=1e-10)
        cross = (U - U.mean(0)).T @ (V - V.mean(0)) / (len(X) - 1)
        np.testing.assert_allclose(cross, np.diag(model.rho), atol=1e-10)
        np.testing.assert_allclose(model.sigma, 1 - model.rho**2)

    def test_singular_block(self, blocks):
        X, Y = blocks
        with pytest.raises(SingularCovariance):
            cca(np.column_stack([X, X[:, 0]]), Y)
        with pytest.raises(SingularCovariance):
            cca(X[:3], Y[:3])

    def test_distances_oracle(self, basin, schema):
        pool, target = basin.stations[1:], basin.stations[0]
        model = fit_cca(pool, schema)
        d = cca_distances(model, target, pool)
        u0 = (np.log([target.attributes[k] for k in schema.names]) - model.x_mean) @ model.A
        for s, di in zip(pool, d):
            v = (discharge_characteristics(s) - model.y_mean) @ model.B
            ref = math.sqrt(sum((v[k] - model.rho[k] * u0[k]) ** 2 / (1 - model.rho[k] ** 2) for k in range(3)))
            assert di == pytest.approx(ref, rel=1e-9)

    def test_radius(self, basin, schema):
        pool, target = basin.stations[1:], basin.stations[0]
        model = fit_cca(pool, schema, r=1e-9)
        with pytest.raises(EmptyRegion):
            cca_roi(model, target, pool)
        assert len(cca_roi(model, target, pool, r=1e6)) == len(pool)


class TestEstimates:
    def test_discharge_characteristics(self, basin):
        s = basin.stations[0]
        c = discharge_characteristics(s)
        assert c[0] == pytest.approx(math.log(s.maxima.mean()))
        assert c[1] == pytest.approx(math.log(s.maxima.std(ddof=1) / s.maxima.mean()))
        assert c[2] == pytest.approx(sample_lmoments(s.maxima)[2])

    @pytest.mark.parametrize("C", [2, 4, 9])
    def test_cluster_estimate(self, basin, schema, C):
        fits = local_fit_all(basin.stations)
        est = cluster_estimate(basin.stations[0].ungauged(), basin.stations[1:], [50, 100], C, schema, fits)
        assert est.shape == (2,) and np.all(est > 0)

    @pytest.mark.parametrize("r", [0.5, 1.5, 3.0])
    def test_cca_estimate(self, basin, schema, r):
        fits = local_fit_all(basin.stations)
        est = cca_estimate(basin.stations[0].ungauged(), basin.stations[1:], [50, 100], r, schema, fits)
        assert est.shape == (2,) and np.all(est > 0)
