"""
Competing regionalizations: Ward fixed clusters and canonical-correlation
regions of influence. Both feed the log-linear quantile regression.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import gev
from .distance import DistanceSpec, features, make_spec
from .errors import EmptyRegion, InsufficientData, SingularCovariance
from .regional import fit_quantreg, predict_quantile
from .station import CovariateSchema, Station, sort_by_id

# ---------------------------------------------------------------------------
# Ward clustering
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Clustering:
    """A Ward partition into ``C`` clusters.

    ``merge_history`` rows are ``(node_a, node_b, increase, size)`` with
    scipy's node numbering (leaves ``0..m-1`` in id order, the merge at step
    s creates node ``m + s``). ``increase`` is the growth of the total
    within-cluster sum of squares.
    """

    C: int
    assignment: dict[str, int]
    merge_history: list[tuple[int, int, float, int]]
    centroids: np.ndarray
    station_ids: tuple[str, ...]

    def members(self, cluster: int) -> list[str]:
        return [sid for sid in self.station_ids if self.assignment[sid] == cluster]


def _ward_merges(P: np.ndarray):
    """Full Ward agglomeration by the Lance-Williams recurrence."""
    m = P.shape[0]
    D = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(D, np.inf)
    size = np.ones(m, dtype=int)
    node = np.arange(m)
    active = np.ones(m, dtype=bool)
    history = []
    for step in range(m - 1):
        idx = np.flatnonzero(active)
        sub = D[np.ix_(idx, idx)]
        flat = int(np.argmin(sub))
        a, b = idx[flat // len(idx)], idx[flat % len(idx)]
        i, j = min(a, b), max(a, b)
        d_ij = D[i, j]
        ni, nj = size[i], size[j]
        for k in idx:
            if k == i or k == j:
                continue
            nk = size[k]
            D[i, k] = D[k, i] = ((ni + nk) * D[i, k] + (nj + nk) * D[j, k] - nk * d_ij) / (ni + nj + nk)
        active[j] = False
        D[j, :] = D[:, j] = np.inf
        lo, hi = sorted((int(node[i]), int(node[j])))
        history.append((lo, hi, float(d_ij / 2.0), int(ni + nj)))
        size[i] = ni + nj
        node[i] = m + step
    return history


def _cut(history, m: int, C: int) -> np.ndarray:
    """Leaf labels after replaying the first ``m - C`` merges."""
    parent = list(range(m))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    rep = {i: i for i in range(m)}  # tree node -> representative leaf
    for step, (a, b, _, _) in enumerate(history[: m - C]):
        ra, rb = find(rep[a]), find(rep[b])
        parent[rb] = ra
        rep[m + step] = ra
    roots = np.array([find(i) for i in range(m)])
    # clusters numbered by their first leaf (leaves are id-sorted)
    labels = np.empty(m, dtype=int)
    seen: dict[int, int] = {}
    for i, r in enumerate(roots):
        labels[i] = seen.setdefault(int(r), len(seen))
    return labels


def ward_cluster(stations: Sequence[Station], spec: DistanceSpec, C: int) -> Clustering:
    """Ward clustering of ``stations`` under the hydrological distance."""
    stations = sort_by_id(stations)
    m = len(stations)
    if not 1 <= C <= m:
        raise ValueError(f"C must lie in [1, {m}]")
    P = features(stations, spec)
    history = _ward_merges(P)
    labels = _cut(history, m, C)
    centroids = np.array([P[labels == c].mean(axis=0) for c in range(C)])
    return Clustering(
        C=C,
        assignment={s.id: int(l) for s, l in zip(stations, labels)},
        merge_history=history,
        centroids=centroids,
        station_ids=tuple(s.id for s in stations),
    )


def grown_cluster(clustering: Clustering, cluster: int, min_size: int) -> list[str]:
    """Members of ``cluster``, climbing the Ward tree until ``min_size`` is reached."""
    ids = clustering.station_ids
    m = len(ids)
    members = {i: {i} for i in range(m)}
    for step, (a, b, _, _) in enumerate(clustering.merge_history):
        members[m + step] = members[a] | members[b]
    want = {i for i, sid in enumerate(ids) if clustering.assignment[sid] == cluster}
    node = next(n for n, mem in members.items() if mem == want)
    for step, (a, b, _, _) in enumerate(clustering.merge_history):
        if len(members[node]) >= min_size:
            break
        if node in (a, b):
            node = m + step
    return [ids[i] for i in sorted(members[node])]


def assign_ungauged(clustering: Clustering, target: Station, spec: DistanceSpec) -> int:
    """Cluster with the nearest centroid; ties go to the lower cluster id."""
    f = features([target], spec)[0]
    d = np.sum((clustering.centroids - f) ** 2, axis=1)
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# canonical correlation analysis
# ---------------------------------------------------------------------------


def discharge_characteristics(station: Station) -> np.ndarray:
    """``(log mean, log coefficient of variation, L-skewness)`` of the maxima."""
    x = station.maxima
    if x.size < 3:
        raise InsufficientData(f"station {station.id} needs at least 3 maxima")
    mean = x.mean()
    cv = x.std(ddof=1) / mean
    _, _, t3 = gev.sample_lmoments(x)
    return np.array([math.log(mean), math.log(cv), t3])


@dataclass(frozen=True, eq=False)
class CcaModel:
    """Canonical weights ``A`` (attributes) and ``B`` (discharge block).

    Canonical scores are ``(x - x_mean) @ A`` and ``(y - y_mean) @ B`` with
    unit sample variance. ``sigma`` is the diagonal conditional covariance of
    discharge scores given attribute scores, ``1 - rho**2``.
    """

    A: np.ndarray
    B: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    r: float
    schema: CovariateSchema | None = None

    def attribute_scores(self, X) -> np.ndarray:
        return (np.atleast_2d(X) - self.x_mean) @ self.A

    def discharge_scores(self, Y) -> np.ndarray:
        return (np.atleast_2d(Y) - self.y_mean) @ self.B


def _inv_sqrt(S: np.ndarray, name: str) -> np.ndarray:
    w, V = linalg.eigh(S)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise SingularCovariance(f"{name} covariance block is singular")
    return (V / np.sqrt(w)) @ V.T


def cca(X: np.ndarray, Y: np.ndarray, r: float = 1.5) -> CcaModel:
    """Canonical correlation analysis of two data blocks (rows = samples).

    Solves the generalized symmetric eigenproblem
    ``Sxy Syy^-1 Syx a = rho^2 Sxx a`` with ``a' Sxx a = 1``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    q = Y.shape[1]
    if n <= max(p, q):
        raise SingularCovariance(f"{n} samples cannot support blocks of size {p} and {q}")
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    Sxx = Xc.T @ Xc / (n - 1)
    Syy = Yc.T @ Yc / (n - 1)
    Sxy = Xc.T @ Yc / (n - 1)
    _inv_sqrt(Sxx, "attribute")
    Syy_isq = _inv_sqrt(Syy, "discharge")
    Syy_inv = Syy_isq @ Syy_isq

    d = min(p, q)
    lhs = Sxy @ Syy_inv @ Sxy.T
    lhs = 0.5 * (lhs + lhs.T)
    evals, evecs = linalg.eigh(lhs, Sxx)  # evecs' Sxx evecs = I
    order = np.argsort(evals)[::-1][:d]
    rho = np.sqrt(np.clip(evals[order], 0.0, 1.0))
    A = evecs[:, order]

    # discharge weights: B = Syy^-1 Syx A / rho, completed for vanishing rho
    B = Syy_inv @ Sxy.T @ A
    norms = np.sqrt(np.einsum("ij,jk,ki->i", B.T, Syy, B))
    B = B / np.where(norms > 0, norms, 1.0)
    small = rho < 1e-10
    if np.any(small):
        Syy_sq = np.linalg.inv(Syy_isq)
        Q, _ = np.linalg.qr(np.column_stack([Syy_sq @ B[:, ~small], np.eye(q)]))
        B[:, small] = Syy_isq @ Q[:, int(np.sum(~small)) : int(np.sum(~small)) + int(np.sum(small))]
    sigma = np.maximum(1.0 - rho**2, 1e-12)
    return CcaModel(A=A, B=B, rho=rho, sigma=sigma, x_mean=xm, y_mean=ym, r=float(r))


def fit_cca(
    stations: Sequence[Station],
    schema: CovariateSchema,
    characteristics: Mapping[str, np.ndarray] | None = None,
    r: float = 1.5,
) -> CcaModel:
    """CCA between log-attributes and discharge characteristics of gauged stations."""
    stations = sort_by_id(stations)
    X = schema.log_design(stations)[:, 1:]
    if characteristics is None:
        characteristics = {s.id: discharge_characteristics(s) for s in stations}
    Y = np.array([characteristics[s.id] for s in stations])
    model = cca(X, Y, r=r)
    return CcaModel(**{**model.__dict__, "schema": schema})


def cca_distances(
    model: CcaModel,
    target,
    pool: Sequence[Station],
    characteristics: Mapping[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Mahalanobis distance of each pool station's discharge scores from the
    conditional mean given the target's attribute scores."""
    x0 = np.log(model.schema.values(target))
    u0 = model.attribute_scores(x0)[0]
    if characteristics is None:
        characteristics = {s.id: discharge_characteristics(s) for s in pool}
    V = model.discharge_scores(np.array([characteristics[s.id] for s in pool]))
    return np.sqrt(np.sum((V - model.rho * u0) ** 2 / model.sigma, axis=1))


def cca_roi(
    model: CcaModel,
    target,
    pool: Sequence[Station],
    characteristics: Mapping[str, np.ndarray] | None = None,
    r: float | None = None,
) -> list[Station]:
    """Pool stations within Mahalanobis radius ``r`` (default ``model.r``)."""
    r = model.r if r is None else r
    if not r > 0:
        raise ValueError("radius must be positive")
    pool = sort_by_id(pool)
    d = cca_distances(model, target, pool, characteristics)
    region = [s for s, di in zip(pool, d) if di <= r]
    if not region:
        raise EmptyRegion(f"no station within radius {r}")
    return region


# ---------------------------------------------------------------------------
# quantile-regression estimators on the baseline regions
# ---------------------------------------------------------------------------


def _quantreg_estimates(region, target, T, schema, local_fits):
    if len(region) < schema.K + 2:
        raise InsufficientData(f"region of {len(region)} is too small for quantile regression")
    return np.array(
        [predict_quantile(fit_quantreg(region, t, schema, local_fits=local_fits), target) for t in T]
    )


def cluster_estimate(
    target: Station,
    pool: Sequence[Station],
    T,
    C: int,
    schema: CovariateSchema,
    local_fits: Mapping[str, gev.FitResult] | None = None,
) -> np.ndarray:
    """Quantile regression on the Ward cluster the target is assigned to.

    A cluster too small for the regression (fewer than K + 2 stations) is
    replaced by its nearest ancestor in the Ward tree that is large enough.
    """
    spec = make_spec(pool, schema)
    cl = ward_cluster(pool, spec, min(C, len(pool)))
    c = assign_ungauged(cl, target, spec)
    members = set(grown_cluster(cl, c, schema.K + 2))
    region = [s for s in pool if s.id in members]
    return _quantreg_estimates(region, target, np.atleast_1d(T), schema, local_fits)


def cca_estimate(
    target: Station,
    pool: Sequence[Station],
    T,
    r: float,
    schema: CovariateSchema,
    local_fits: Mapping[str, gev.FitResult] | None = None,
    grow: float = 1.5,
) -> np.ndarray:
    """Quantile regression on the CCA region of influence.

    The radius is enlarged by ``grow`` until the region supports the
    regression (at least K + 2 stations).
    """
    chars = {s.id: discharge_characteristics(s) for s in pool}
    model = fit_cca(pool, schema, chars, r=r)
    pool = sort_by_id(pool)
    d = cca_distances(model, target, pool, chars)
    need = schema.K + 2
    if len(pool) < need:
        raise InsufficientData("pool too small for quantile regression")
    radius = r
    while np.sum(d <= radius) < need:
        radius *= grow
    region = [s for s, di in zip(pool, d) if di <= radius]
    return _quantreg_estimates(region, target, np.atleast_1d(T), schema, local_fits)
