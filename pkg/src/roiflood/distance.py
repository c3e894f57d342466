"""
Hydrological distance between catchments.

Attributes are z-scored against the gauged pool. Centroid distance is
divided by the standard deviation of all pairwise centroid distances in the
pool so that its weight trades off on a comparable scale. Each station maps
to a feature vector whose Euclidean distances equal the weighted distance.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InsufficientPool, ZeroVariance
from .station import CovariateSchema, Station


@dataclass(frozen=True, eq=False)
class NormStats:
    means: np.ndarray
    sds: np.ndarray
    coord_scale: float = 1.0


@dataclass(frozen=True, eq=False)
class DistanceSpec:
    """Weights ``w0`` (centroid proximity) and ``w`` (one per attribute)."""

    w0: float
    w: tuple[float, ...]
    norm_stats: NormStats
    schema: CovariateSchema

    def __post_init__(self):
        w = tuple(float(v) for v in self.w)
        object.__setattr__(self, "w", w)
        if len(w) != self.schema.K:
            raise ValueError(f"need {self.schema.K} attribute weights, got {len(w)}")
        if self.w0 < 0 or any(v < 0 for v in w):
            raise ValueError("weights must be non-negative")
        if abs(self.w0 + sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        if np.any(~(np.asarray(self.norm_stats.sds) > 0)):
            raise ValueError("normalization standard deviations must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.array((self.w0,) + self.w)


def normalize_attributes(stations: Sequence[Station], schema: CovariateSchema) -> NormStats:
    """Means and sample standard deviations of each attribute over ``stations``.

    Also records the centroid-distance scale (sample SD of pairwise
    centroid distances).
    """
    if len(stations) < 2:
        raise ValueError("normalization needs at least 2 stations")
    A = np.array([[s.attributes[k] for k in schema.names] for s in stations], dtype=float)
    means = A.mean(axis=0)
    sds = A.std(axis=0, ddof=1)
    bad = [schema.names[k] for k in np.flatnonzero(~(sds > 0))]
    if bad:
        raise ZeroVariance(f"constant attribute(s): {bad}")
    coords = np.array([[s.x, s.y] for s in stations], dtype=float)
    d = pdist(coords)
    scale = float(np.std(d, ddof=1)) if d.size > 1 else float(d[0]) if d.size else 0.0
    if not scale > 0:
        scale = 1.0
    return NormStats(means, sds, scale)


def make_spec(
    stations: Sequence[Station],
    schema: CovariateSchema,
    weights=None,
) -> DistanceSpec:
    """Distance spec normalized on ``stations``; equal weights by default."""
    stats = normalize_attributes(stations, schema)
    if weights is None:
        weights = np.full(schema.K + 1, 1.0 / (schema.K + 1))
    weights = np.asarray(weights, dtype=float)
    return DistanceSpec(float(weights[0]), tuple(weights[1:]), stats, schema)


def raw_features(stations: Sequence[Station], spec: DistanceSpec) -> np.ndarray:
    """Unweighted coordinates ``[x/scale, y/scale, z_1, ..., z_K]``."""
    st = spec.norm_stats
    rows = []
    for s in stations:
        a = np.array([s.attributes[k] for k in spec.schema.names], dtype=float)
        rows.append(np.concatenate([[s.x / st.coord_scale, s.y / st.coord_scale], (a - st.means) / st.sds]))
    return np.array(rows).reshape(len(rows), 2 + spec.schema.K)


def feature_weights(spec: DistanceSpec) -> np.ndarray:
    return np.concatenate([[spec.w0, spec.w0], spec.w])


def features(stations: Sequence[Station], spec: DistanceSpec) -> np.ndarray:
    """Weighted feature vectors; Euclidean distance between rows is ``D``."""
    return raw_features(stations, spec) * np.sqrt(feature_weights(spec))


def hydro_distance(a: Station, b: Station, spec: DistanceSpec) -> float:
    f = features([a, b], spec)
    return float(math.sqrt(np.sum((f[0] - f[1]) ** 2)))


def distance_matrix(stations: Sequence[Station], spec: DistanceSpec) -> np.ndarray:
    f = features(stations, spec)
    diff = f[:, None, :] - f[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def squared_components(target: Station, pool: Sequence[Station], spec: DistanceSpec) -> np.ndarray:
    """Per-term squared differences, shape ``(len(pool), K + 1)``.

    Column 0 is the scaled squared centroid distance, column k the squared
    z-score difference of attribute k, so ``D**2 = comps @ weights``.
    """
    F = raw_features([target] + list(pool), spec)
    diff2 = (F[1:] - F[0]) ** 2
    return np.column_stack([diff2[:, 0] + diff2[:, 1], diff2[:, 2:]])


@dataclass(frozen=True)
class Neighborhood:
    target: str
    members: tuple[str, ...]
    distances: tuple[float, ...]


def nearest_neighbors(
    target: Station,
    pool: Sequence[Station],
    spec: DistanceSpec,
    J: int,
) -> Neighborhood:
    """The ``J`` pool stations closest to ``target`` (ties by ascending id).

    The target itself is never a candidate.
    """
    cands = [s for s in pool if s.id != target.id]
    if J > len(cands):
        raise InsufficientPool(f"J={J} exceeds pool of {len(cands)}")
    if J < 1:
        raise ValueError("J must be positive")
    d = np.array([hydro_distance(target, s, spec) for s in cands])
    ids = [s.id for s in cands]
    order = sorted(range(len(cands)), key=lambda i: (d[i], ids[i]))[:J]
    return Neighborhood(target.id, tuple(ids[i] for i in order), tuple(float(d[i]) for i in order))
