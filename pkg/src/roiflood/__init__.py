"""Regional GEV estimation of flood return levels with an optimal region of influence."""

from .errors import RoiFloodError
from .gev import GevParams, fit_local, fit_trend, gev_cdf, gev_quantile, return_level
from .regional import RegionalModel, fit_quantreg, fit_regional, predict_params
from .roi import RegionCache, RoiConfig, RoiResult, estimate_ungauged, find_roi, find_roi_atsite
from .station import DEFAULT_ATTRIBUTES, CovariateSchema, Station

__all__ = [
    "DEFAULT_ATTRIBUTES",
    "CovariateSchema",
    "GevParams",
    "RegionCache",
    "RegionalModel",
    "RoiConfig",
    "RoiFloodError",
    "RoiResult",
    "Station",
    "estimate_ungauged",
    "find_roi",
    "find_roi_atsite",
    "fit_local",
    "fit_quantreg",
    "fit_regional",
    "fit_trend",
    "gev_cdf",
    "gev_quantile",
    "predict_params",
    "return_level",
]
