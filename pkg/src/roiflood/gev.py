"""
Generalized extreme value (GEV) distribution.

Distribution functions, return levels, L-moment starting values, local
maximum-likelihood fitting and a likelihood-ratio check for a linear
temporal trend in location and log-scale.

Shape convention: ``xi > 0`` is heavy-tailed (Frechet), ``xi < 0`` has a
finite upper endpoint (Weibull), ``xi == 0`` is the Gumbel limit. This is the
negative of ``scipy.stats.genextreme``'s ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import optimize, stats
from scipy.special import gamma as gamma_fn

from .errors import DegenerateSample, InsufficientData, NonConvergence

#: Below this |xi| the Gumbel limit (plus a short series correction) is used.
GUMBEL_TOL = 1e-9
#: Admissible shape range for all likelihood fits.
XI_BOUNDS = (-0.5, 1.0)
#: Local fits are refused for shorter records.
MIN_RECORD = 10

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class GevParams:
    """Location ``mu``, scale ``sigma`` (> 0) and shape ``xi``."""

    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.xi)):
            raise ValueError(f"GEV parameters must be finite, got {self}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be strictly positive, got {self.sigma}")

    def in_support(self, x: ArrayLike) -> np.ndarray:
        """Boolean mask of points where ``1 + xi (x - mu) / sigma > 0``."""
        x = np.asarray(x, dtype=float)
        if abs(self.xi) < GUMBEL_TOL:
            return np.isfinite(x)
        return 1.0 + self.xi * (x - self.mu) / self.sigma > 0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mu, self.sigma, self.xi)


@dataclass(frozen=True)
class FitResult:
    params: GevParams
    loglik: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class TrendFit:
    """Stationary fit plus a fit with linear trends in ``mu`` and ``log sigma``.

    Slopes are per calendar year, about the record's mean year.
    """

    stationary: FitResult
    trend_loglik: float
    mu_slope: float
    sigma_logslope: float
    lr_pvalue: float
    mu0: float = float("nan")
    log_sigma0: float = float("nan")
    xi: float = float("nan")
    converged: bool = True


# ---------------------------------------------------------------------------
# distribution functions
# ---------------------------------------------------------------------------


def _log1p_ratio(z, xi):
    """``log(1 + xi z) / xi`` with the Gumbel limit ``z`` as xi -> 0."""
    if abs(xi) < GUMBEL_TOL:
        return z - 0.5 * xi * z**2 + xi**2 * z**3 / 3.0
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log1p(xi * z) / xi


def _expm1_ratio(y, xi):
    """``(exp(xi y) - 1) / xi`` with the Gumbel limit ``y`` as xi -> 0."""
    if abs(xi) < GUMBEL_TOL:
        return y + 0.5 * xi * y**2 + xi**2 * y**3 / 6.0
    return np.expm1(xi * y) / xi


def gev_cdf(x: ArrayLike, p: GevParams):
    """GEV distribution function ``G(x)``; 0 or 1 outside the support."""
    x = np.asarray(x, dtype=float)
    z = (x - p.mu) / p.sigma
    xi = p.xi
    if abs(xi) < GUMBEL_TOL:
        out = np.exp(-np.exp(-_log1p_ratio(z, xi)))
    else:
        xz = xi * z
        inside = xz > -1.0
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = np.exp(-np.exp(-np.log1p(np.where(inside, xz, 0.0)) / xi))
        # below the lower endpoint (xi > 0) or above the upper endpoint (xi < 0)
        out = np.where(inside, out, 0.0 if xi > 0 else 1.0)
    return out[()] if out.ndim == 0 else out


def gev_logpdf(x: ArrayLike, p: GevParams):
    """Log-density; ``-inf`` outside the support."""
    x = np.asarray(x, dtype=float)
    out = _logpdf(x, p.mu, p.sigma, p.xi)
    return out[()] if out.ndim == 0 else out


def gev_pdf(x: ArrayLike, p: GevParams):
    return np.exp(gev_logpdf(x, p))


def _logpdf(x, mu, sigma, xi):
    """Vectorised log-density; ``mu`` and ``sigma`` may be arrays, ``xi`` scalar."""
    z = (x - mu) / sigma
    if abs(xi) < GUMBEL_TOL:
        a = _log1p_ratio(z, xi)
        return -np.log(sigma) - (1.0 + xi) * a - np.exp(-a)
    xz = xi * z
    inside = xz > -1.0
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        log_s = np.log1p(np.where(inside, xz, 0.0))
        out = -np.log(sigma) - (1.0 + 1.0 / xi) * log_s - np.exp(-log_s / xi)
    return np.where(inside, out, -np.inf)


def _quantile(prob, mu, sigma, xi):
    y = -np.log(-np.log(prob))
    return mu + sigma * _expm1_ratio(y, xi)


def gev_quantile(prob: ArrayLike, p: GevParams):
    """Inverse distribution function, ``prob`` strictly inside (0, 1)."""
    prob = np.asarray(prob, dtype=float)
    if np.any(~((prob > 0) & (prob < 1))):
        raise ValueError("probabilities must lie strictly between 0 and 1")
    out = _quantile(prob, p.mu, p.sigma, p.xi)
    return out[()] if np.ndim(out) == 0 else out


def return_level(T: ArrayLike, p: GevParams):
    """T-year return level, the ``1 - 1/T`` quantile."""
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 1)):
        raise ValueError("return periods must exceed 1 year")
    return gev_quantile(1.0 - 1.0 / T, p)


def gev_sample(p: GevParams, size, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws."""
    u = np.clip(rng.random(size), np.finfo(float).tiny, None)
    return _quantile(u, p.mu, p.sigma, p.xi)


# ---------------------------------------------------------------------------
# L-moments
# ---------------------------------------------------------------------------


def sample_lmoments(x: ArrayLike) -> tuple[float, float, float]:
    """First two sample L-moments and the L-skewness ``(l1, l2, t3)``.

    Uses the unbiased probability-weighted moments b0, b1, b2.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 3:
        raise InsufficientData("L-moments need at least 3 observations")
    i = np.arange(n)
    b0 = x.mean()
    b1 = np.sum(i / (n - 1) * x) / n
    b2 = np.sum(i * (i - 1) / ((n - 1) * (n - 2)) * x) / n
    l1 = b0
    l2 = 2 * b1 - b0
    l3 = 6 * b2 - 6 * b1 + b0
    if l2 <= 0:
        raise DegenerateSample("sample has no spread")
    return l1, l2, l3 / l2


def lmoment_fit(x: ArrayLike) -> GevParams:
    """GEV parameters by the method of L-moments (Hosking's approximation)."""
    l1, l2, t3 = sample_lmoments(x)
    c = 2.0 / (3.0 + t3) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c
    if abs(k) < 1e-6:
        sigma = l2 / math.log(2)
        mu = l1 - EULER_GAMMA * sigma
    else:
        g = gamma_fn(1.0 + k)
        sigma = l2 * k / ((1.0 - 2.0**-k) * g)
        mu = l1 - sigma * (1.0 - g) / k
    return GevParams(float(mu), float(sigma), float(-k))


# ---------------------------------------------------------------------------
# local maximum likelihood
# ---------------------------------------------------------------------------


def gev_loglik(x: ArrayLike, p: GevParams) -> float:
    return float(np.sum(_logpdf(np.asarray(x, dtype=float), p.mu, p.sigma, p.xi)))


def _feasible_start(x, p: GevParams) -> GevParams:
    """Shrink the shape toward the Gumbel case until every point is in-support."""
    lo, hi = XI_BOUNDS
    xi = min(max(p.xi, lo + 0.05), hi - 0.05)
    for _ in range(60):
        cand = GevParams(p.mu, p.sigma, xi)
        if np.all(cand.in_support(x)):
            return cand
        xi *= 0.5
    return GevParams(p.mu, p.sigma, 0.0)


def _check_sample(x, min_record):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("maxima must be one-dimensional")
    if x.size < min_record:
        raise InsufficientData(f"need at least {min_record} maxima, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("maxima must be finite and positive")
    if np.ptp(x) == 0:
        raise DegenerateSample("all maxima are equal")
    return x


def _nelder_mead(fun, x0, steps, maxiter=5000, tol=1e-8):
    x0 = np.asarray(x0, dtype=float)
    simplex = np.vstack([x0] + [x0 + np.eye(x0.size)[i] * steps[i] for i in range(x0.size)])
    return optimize.minimize(
        fun,
        x0,
        method="Nelder-Mead",
        options=dict(
            initial_simplex=simplex,
            xatol=1e-7,
            fatol=tol,
            maxiter=maxiter,
            maxfev=4 * maxiter,
        ),
    )


def fit_local(
    maxima: ArrayLike,
    min_record: int = MIN_RECORD,
    strict: bool = True,
) -> FitResult:
    """Maximum-likelihood GEV fit to a single record of annual maxima.

    Nelder-Mead on standardized parameters, started from L-moment estimates.
    The shape is restricted to ``XI_BOUNDS``.

    Parameters
    ----------
    maxima : array-like
        Positive annual maxima.
    min_record : int
        Shortest record accepted.
    strict : bool
        Raise :class:`NonConvergence` if the optimizer stops early; otherwise
        return with ``converged=False``.
    """
    x = _check_sample(maxima, min_record)
    m, s = x.mean(), x.std()
    start = _feasible_start(x, lmoment_fit(x))
    lo, hi = XI_BOUNDS

    def nll(theta):
        mu0, lsig, xi = theta
        if not lo < xi < hi:
            return np.inf
        ll = np.sum(_logpdf(x, m + s * mu0, s * math.exp(lsig), xi))
        return -ll if np.isfinite(ll) else np.inf

    theta0 = [(start.mu - m) / s, math.log(start.sigma / s), start.xi]
    res = _nelder_mead(nll, theta0, steps=(0.1, 0.1, 0.05))
    mu0, lsig, xi = res.x
    params = GevParams(float(m + s * mu0), float(s * math.exp(lsig)), float(xi))
    loglik = -float(res.fun)
    converged = bool(res.success) and np.isfinite(loglik)
    if strict and not converged:
        raise NonConvergence(f"local GEV fit did not converge: {res.message}")
    return FitResult(params, loglik, converged, int(res.nit))


def fit_trend(
    maxima: ArrayLike,
    years: ArrayLike,
    min_record: int = MIN_RECORD,
) -> TrendFit:
    """Compare a stationary GEV fit against linear trends in time.

    The trend model is ``mu(t) = mu0 + a (t - tbar)`` and
    ``log sigma(t) = s0 + b (t - tbar)`` with common shape. The likelihood
    ratio statistic is referred to chi-squared with 2 degrees of freedom.
    """
    x = _check_sample(maxima, min_record)
    t = np.asarray(years, dtype=float)
    if t.shape != x.shape:
        raise ValueError("maxima and years must have equal length")
    if np.any(np.diff(t) <= 0):
        raise ValueError("years must be strictly increasing")

    stat_fit = fit_local(x, min_record=min_record)
    m, s = x.mean(), x.std()
    tbar, tsd = t.mean(), t.std()
    tau = (t - tbar) / tsd
    lo, hi = XI_BOUNDS

    def nll(theta):
        a0, a1, g0, g1, xi = theta
        if not lo < xi < hi:
            return np.inf
        ll = np.sum(_logpdf(x, m + s * (a0 + a1 * tau), s * np.exp(g0 + g1 * tau), xi))
        return -ll if np.isfinite(ll) else np.inf

    p0 = stat_fit.params
    base = np.array([(p0.mu - m) / s, 0.0, math.log(p0.sigma / s), 0.0, p0.xi])
    starts = [base]
    # second start: OLS slope of the maxima on time
    slope = np.polyfit(tau, (x - m) / s, 1)[0]
    alt = base.copy()
    alt[1] = slope
    if np.isfinite(nll(alt)):
        starts.append(alt)

    best = None
    for theta0 in starts:
        res = _nelder_mead(nll, theta0, steps=(0.1, 0.1, 0.1, 0.1, 0.05), maxiter=5000)
        if best is None or res.fun < best.fun:
            best = res
    trend_ll = -float(best.fun)
    # nested models: the stationary optimum is a feasible trend point
    trend_ll = max(trend_ll, stat_fit.loglik)
    lr = max(0.0, 2.0 * (trend_ll - stat_fit.loglik))
    a0, a1, g0, g1, xi = best.x
    return TrendFit(
        stationary=stat_fit,
        trend_loglik=trend_ll,
        mu_slope=float(s * a1 / tsd),
        sigma_logslope=float(g1 / tsd),
        lr_pvalue=float(stats.chi2.sf(lr, 2)),
        mu0=float(m + s * a0),
        log_sigma0=float(math.log(s) + g0),
        xi=float(xi),
        converged=bool(best.success),
    )
