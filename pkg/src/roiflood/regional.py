"""
Regional models over a set of gauged stations.

``fit_regional`` fits GEV distributions whose location and scale are
log-linear in catchment attributes with one shape shared by the region,
by maximizing the independence likelihood (sum of marginal log-densities
over stations and years). ``fit_quantreg`` is the classical alternative: an
ordinary least-squares regression of log T-year quantiles on the same
log-attributes.
"""

from __future__ import annotations

import math
import weakref
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import gev
from .errors import (
    DegenerateSample,
    InsufficientData,
    NonConvergence,
    RankDeficientCovariates,
)
from .gev import GevParams, XI_BOUNDS
from .station import CovariateSchema, Station, sort_by_id

# ξ used in the gradient formulas is kept at least this far from zero
_XI_GRAD_FLOOR = 1e-6
# objective value outside the support; finite so the line search can backtrack
_INFEASIBLE = 1e12


@dataclass(frozen=True, eq=False)
class RegionalModel:
    """Fitted regional GEV.

    ``alpha`` and ``beta`` hold the intercept followed by one slope per
    schema attribute for ``log mu`` and ``log sigma``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    xi: float
    schema: CovariateSchema
    loglik: float
    converged: bool = True
    station_ids: tuple[str, ...] = ()

    def params_for(self, attributes) -> GevParams:
        return predict_params(self, attributes)


@dataclass(frozen=True, eq=False)
class QuantRegModel:
    T: float
    alpha: np.ndarray
    residual_sd: float
    schema: CovariateSchema


def _check_rank(X: np.ndarray) -> None:
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientCovariates(
            f"log-attribute design of shape {X.shape} is column-rank-deficient"
        )


def _standardize(X: np.ndarray):
    """Centre and scale the slope columns; returns (Z, means, sds)."""
    means = X[:, 1:].mean(axis=0)
    sds = X[:, 1:].std(axis=0)
    if np.any(sds == 0):
        raise RankDeficientCovariates("a covariate is constant across the region")
    Z = X.copy()
    Z[:, 1:] = (X[:, 1:] - means) / sds
    return Z, means, sds


def _unstandardize(coef: np.ndarray, means, sds) -> np.ndarray:
    out = coef.astype(float).copy()
    out[1:] = coef[1:] / sds
    out[0] = coef[0] - np.sum(coef[1:] * means / sds)
    return out


@np.errstate(over="ignore", divide="ignore", invalid="ignore")
def _neg_loglik_grad(theta, Z, idx, x, p):
    """Negative independence log-likelihood and its gradient.

    ``Z`` holds one standardized design row per station and ``idx`` maps
    each observation in ``x`` to its station row.
    """
    a, b, xi = theta[:p], theta[p : 2 * p], theta[2 * p]
    mu = np.exp(Z @ a)[idx]
    log_sigma = (Z @ b)[idx]
    sigma = np.exp(log_sigma)
    z = (x - mu) / sigma
    s = 1.0 + xi * z
    if not (s.min() > 0 and np.isfinite(z).all()):
        return _INFEASIBLE, np.zeros_like(theta)

    xg = xi if abs(xi) >= _XI_GRAD_FLOOR else math.copysign(_XI_GRAD_FLOOR, xi or 1.0)
    sg = 1.0 + xg * z
    log_s = np.log(sg)
    t = np.exp(-log_s / xg)
    if xg == xi:
        ll = -log_sigma.sum() - (1.0 + 1.0 / xi) * log_s.sum() - t.sum()
    else:
        ll = np.sum(gev._logpdf(x, mu, sigma, xi))
    if not np.isfinite(ll):
        return _INFEASIBLE, np.zeros_like(theta)
    dz = (t - xg - 1.0) / sg
    d_logmu = np.bincount(idx, -dz * mu / sigma, Z.shape[0])
    d_logsig = np.bincount(idx, -1.0 - z * dz, Z.shape[0])
    d_xi = np.sum((1.0 - t) * log_s / xg**2 - z * (xg + 1.0 - t) / (xg * sg))
    grad = np.concatenate([Z.T @ d_logmu, Z.T @ d_logsig, [d_xi]])
    return -ll, -grad


# stations are immutable, so their L-moment fits can be memoized
_LMOMENT_FITS: "weakref.WeakKeyDictionary[Station, GevParams | None]" = weakref.WeakKeyDictionary()


def _station_lmoments(st: Station) -> GevParams | None:
    try:
        return _LMOMENT_FITS[st]
    except KeyError:
        pass
    try:
        p = gev.lmoment_fit(st.maxima)
    except (DegenerateSample, InsufficientData):
        p = None
    _LMOMENT_FITS[st] = p
    return p


def _initial_coefficients(stations, Z):
    """Regress per-station L-moment estimates on the standardized design."""
    rows, lmu, lsig, xis = [], [], [], []
    for i, st in enumerate(stations):
        p = _station_lmoments(st)
        if p is None or p.mu <= 0:
            continue
        rows.append(i)
        lmu.append(math.log(p.mu))
        lsig.append(math.log(p.sigma))
        xis.append(p.xi)
    P = Z.shape[1]
    if len(rows) >= P:
        A = Z[rows]
        a = np.linalg.lstsq(A, np.array(lmu), rcond=None)[0]
        b = np.linalg.lstsq(A, np.array(lsig), rcond=None)[0]
        xi = float(np.median(xis))
    else:
        pooled = gev.lmoment_fit(np.concatenate([s.maxima for s in stations]))
        a = np.zeros(P)
        b = np.zeros(P)
        a[0] = math.log(max(pooled.mu, 1e-9))
        b[0] = math.log(pooled.sigma)
        xi = pooled.xi
    return a, b, float(np.clip(xi, -0.3, 0.5))


def fit_regional(
    stations: Sequence[Station],
    schema: CovariateSchema,
    strict: bool = True,
    start: RegionalModel | None = None,
) -> RegionalModel:
    """Fit the regional GEV with log-linear location/scale and common shape.

    Parameters
    ----------
    stations : sequence of Station
        Gauged stations forming the region.
    schema : CovariateSchema
        Attributes used as log-covariates.
    strict : bool
        Raise :class:`NonConvergence` when the optimizer fails; otherwise
        return the last iterate with ``converged=False``.
    start : RegionalModel, optional
        Warm start; used only if it is feasible and better than the
        L-moment initialization.

    Returns
    -------
    RegionalModel
    """
    stations = sort_by_id(stations)
    if len(stations) < 2:
        raise InsufficientData("a regional fit needs at least 2 stations")
    K = schema.K
    n_obs = sum(s.n for s in stations)
    if n_obs < 5 * (2 * K + 3):
        raise InsufficientData(f"{n_obs} observations are too few for {2 * K + 3} parameters")
    for s in stations:
        if not s.gauged:
            raise InsufficientData(f"station {s.id} has no record")
        if np.any(s.maxima <= 0):
            raise ValueError(f"station {s.id} has non-positive maxima")

    X = schema.log_design(stations)
    _check_rank(X)
    Z, means, sds = _standardize(X)
    P = K + 1
    idx = np.repeat(np.arange(len(stations)), [s.n for s in stations])
    x = np.concatenate([s.maxima for s in stations])

    a, b, xi0 = _initial_coefficients(stations, Z)
    theta0 = None
    for xi in [xi0 * 0.5**i for i in range(8)] + [0.0]:
        cand = np.concatenate([a, b, [xi]])
        if _neg_loglik_grad(cand, Z, idx, x, P)[0] < _INFEASIBLE:
            theta0 = cand
            break
    if theta0 is None:
        # widen the scale until the Gumbel start covers every observation
        cand = np.concatenate([a, b + np.eye(P)[0] * 1.0, [0.0]])
        theta0 = cand
    if start is not None and start.schema == schema:
        warm = np.concatenate(
            [
                start.alpha[:1] + start.alpha[1:] @ means if K else start.alpha[:1],
                start.alpha[1:] * sds,
                start.beta[:1] + start.beta[1:] @ means if K else start.beta[:1],
                start.beta[1:] * sds,
                [start.xi],
            ]
        )
        if _neg_loglik_grad(warm, Z, idx, x, P)[0] < _neg_loglik_grad(theta0, Z, idx, x, P)[0]:
            theta0 = warm
    f0 = _neg_loglik_grad(theta0, Z, idx, x, P)[0]

    lo, hi = XI_BOUNDS
    bounds = [(None, None)] * (2 * P) + [(lo + 1e-6, hi - 1e-6)]
    theta, fval = theta0, f0
    gtol = 1e-3 * math.sqrt(n_obs)
    for _ in range(3):
        res = optimize.minimize(
            _neg_loglik_grad,
            theta,
            args=(Z, idx, x, P),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options=dict(maxiter=3000, ftol=1e-14, gtol=1e-8),
        )
        if res.fun <= fval:
            theta, fval = res.x, res.fun
        grad = _neg_loglik_grad(theta, Z, idx, x, P)[1]
        # a shape held at its bound does not count against convergence
        if (theta[-1] <= bounds[-1][0] and grad[-1] > 0) or (theta[-1] >= bounds[-1][1] and grad[-1] < 0):
            grad[-1] = 0.0
        converged = fval < _INFEASIBLE and np.max(np.abs(grad)) < gtol
        if converged:
            break
    if strict and not converged:
        raise NonConvergence(f"regional fit did not converge: {res.message}")

    alpha = _unstandardize(theta[:P], means, sds)
    beta = _unstandardize(theta[P : 2 * P], means, sds)
    return RegionalModel(
        alpha=alpha,
        beta=beta,
        xi=float(theta[2 * P]),
        schema=schema,
        loglik=-float(fval),
        converged=bool(converged),
        station_ids=tuple(s.id for s in stations),
    )


def predict_params(model: RegionalModel, attributes) -> GevParams:
    """GEV parameters implied by the regional links at the given attributes."""
    ly = np.log(model.schema.values(attributes))
    mu = math.exp(model.alpha[0] + float(np.dot(model.alpha[1:], ly)))
    sigma = math.exp(model.beta[0] + float(np.dot(model.beta[1:], ly)))
    return GevParams(mu, sigma, model.xi)


def regional_loglik(model: RegionalModel, stations: Sequence[Station]) -> float:
    """Independence log-likelihood of ``stations`` under ``model``."""
    return float(sum(gev.gev_loglik(s.maxima, predict_params(model, s)) for s in stations))


def fit_quantreg(
    stations: Sequence[Station],
    T: float,
    schema: CovariateSchema,
    quantiles: Mapping[str, float] | None = None,
    local_fits: Mapping[str, gev.FitResult] | None = None,
) -> QuantRegModel:
    """Log-linear regression of T-year quantiles on log-attributes (OLS).

    The response for each station is taken from ``quantiles`` when given,
    otherwise from the station's local GEV fit (looked up in ``local_fits``
    or computed).
    """
    stations = sort_by_id(stations)
    if T <= 1:
        raise ValueError("return period must exceed 1")
    X = schema.log_design(stations)
    _check_rank(X)
    q = np.empty(len(stations))
    for i, s in enumerate(stations):
        if quantiles is not None:
            q[i] = quantiles[s.id]
        else:
            fit = local_fits[s.id] if local_fits and s.id in local_fits else gev.fit_local(s.maxima)
            q[i] = gev.return_level(T, fit.params)
    if np.any(~(q > 0)):
        raise ValueError("quantile responses must be positive")
    y = np.log(q)
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    dof = X.shape[0] - X.shape[1]
    if dof > 0:
        resid = y - X @ coef
        sd = math.sqrt(float(resid @ resid) / dof)
    else:
        sd = 0.0
    return QuantRegModel(T=float(T), alpha=coef, residual_sd=sd, schema=schema)


def predict_quantile(model: QuantRegModel, attributes) -> float:
    ly = np.log(model.schema.values(attributes))
    return math.exp(model.alpha[0] + float(np.dot(model.alpha[1:], ly)))
