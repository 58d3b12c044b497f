"""Regression engine and the analyses built on it."""

from .elasticity_core import elasticity_regression, two_group_slopes
from .firm_core import FIRM_SPECS, MIN_EMPLOYEES, firm_regressions, theil_entropy
from .models import CityYearFrame, ElasticityCurve, RegressionResult, ScalingSummary, TwoGroupSlopes
from .ols_core import information_criteria, ols
from .panel_core import GROWTH_SPECS, GrowthSpec, bartik, build_city_year_frame, cp_growth_scatter, formal_rate, growth_regression
from .scaling_core import complexity_deciles, scaling_summary

__all__ = [
    "FIRM_SPECS",
    "GROWTH_SPECS",
    "MIN_EMPLOYEES",
    "CityYearFrame",
    "ElasticityCurve",
    "GrowthSpec",
    "RegressionResult",
    "ScalingSummary",
    "SyntheticBundle",
    "SyntheticConfig",
    "TwoGroupSlopes",
    "bartik",
    "build_city_year_frame",
    "complexity_deciles",
    "cp_growth_scatter",
    "elasticity_regression",
    "firm_regressions",
    "formal_rate",
    "generate_synthetic",
    "growth_regression",
    "information_criteria",
    "ols",
    "scaling_summary",
    "theil_entropy",
    "two_group_slopes",
    "write_bundle",
]


def __getattr__(name):
    if name in ("SyntheticBundle", "SyntheticConfig", "generate_synthetic", "write_bundle"):
        from . import synthetic
        return getattr(synthetic, name)
    raise AttributeError(name)
