"""Result containers for the econometrics stage."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd


VIF_FLAG = 10.0


def stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    return "*" if p < 0.1 else ""


@dataclass
class RegressionResult:
    """One fitted OLS model.

    ``se`` holds the standard errors selected by ``se_mode``; both robust
    (HC1) and classical ones are kept. ``vif`` covers the non-dummy
    regressors only.
    """

    terms: list[str]
    coef: np.ndarray
    se: np.ndarray
    se_robust: np.ndarray
    se_classical: np.ndarray
    t: np.ndarray
    p: np.ndarray
    cov: np.ndarray
    r2: float
    adj_r2: float
    aic: float
    bic: float
    rss: float
    vif: dict[str, float]
    n_obs: int
    n_params: int
    dropped: list[str] = field(default_factory=list)
    dummy_terms: list[str] = field(default_factory=list)
    se_mode: str = "robust"
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitted: np.ndarray = field(default_factory=lambda: np.zeros(0))
    name: str = ""
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def max_vif(self) -> float:
        return max(self.vif.values()) if self.vif else float("nan")

    @property
    def vif_flag(self) -> bool:
        return bool(self.vif) and self.max_vif > VIF_FLAG

    def _index(self, term: str) -> int:
        if term not in self.terms: raise KeyError(f"term {term!r} is not in the model (dropped: {self.dropped})")
        return self.terms.index(term)

    def coefficient(self, term: str) -> float:
        return float(self.coef[self._index(term)])

    def std_error(self, term: str) -> float:
        return float(self.se[self._index(term)])

    def p_value(self, term: str) -> float:
        return float(self.p[self._index(term)])

    def to_table(self) -> pd.DataFrame:
        """term, coef, se, t, stars for every non-dummy term."""
        keep = [index for index, term in enumerate(self.terms) if term not in self.dummy_terms]
        return pd.DataFrame({
            "term": [self.terms[index] for index in keep],
            "coef": self.coef[keep],
            "se": self.se[keep],
            "t": self.t[keep],
            "stars": [stars(self.p[index]) for index in keep],
        })

    def summary_row(self) -> dict[str, Any]:
        return {
            "model": self.name,
            "n": self.n_obs,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "aic": self.aic,
            "bic": self.bic,
            "max_vif": self.max_vif,
            "vif_flag": self.vif_flag,
            "dropped": ";".join(self.dropped),
        }


@dataclass
class ElasticityCurve:
    """Employment-population elasticity as a linear function of CI."""

    beta: float
    gamma: float
    se_beta: float
    se_gamma: float
    cov_beta_gamma: float
    grid: np.ndarray
    result: RegressionResult | None = None
    z: float = 1.96

    @property
    def elasticity(self) -> np.ndarray:
        return self.beta + self.gamma * self.grid

    @property
    def band(self) -> np.ndarray:
        variance = self.se_beta ** 2 + self.grid ** 2 * self.se_gamma ** 2 + 2.0 * self.grid * self.cov_beta_gamma
        return self.z * np.sqrt(np.clip(variance, 0.0, None))

    def to_frame(self) -> pd.DataFrame:
        band = self.band
        return pd.DataFrame({
            "ci": self.grid,
            "elasticity": self.elasticity,
            "lower": self.elasticity - band,
            "upper": self.elasticity + band,
        })


@dataclass
class TwoGroupSlopes:
    top: RegressionResult
    bottom: RegressionResult
    top_industries: tuple[str, ...]
    bottom_industries: tuple[str, ...]

    @property
    def top_slope(self) -> float:
        return self.top.coefficient("log_p")

    @property
    def bottom_slope(self) -> float:
        return self.bottom.coefficient("log_p")

    @property
    def gap(self) -> float:
        return self.top_slope - self.bottom_slope

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "group": ["top", "bottom"],
            "slope": [self.top_slope, self.bottom_slope],
            "se": [self.top.std_error("log_p"), self.bottom.std_error("log_p")],
            "n_obs": [self.top.n_obs, self.bottom.n_obs],
            "n_industries": [len(self.top_industries), len(self.bottom_industries)],
        })


@dataclass(frozen=True, eq=False)
class CityYearFrame:
    """Regression panel: one row per (city, year) with a lagged formal rate and potential."""

    frame: pd.DataFrame
    diagnostics: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("city", "year", "f", "d_f", "f_lag", "cp_lag", "bartik", "d_govexp", "inst_quality",
               "edu_quality", "log_wap")

    def __len__(self) -> int:
        return len(self.frame)

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, diagnostics: dict[str, Any] | None = None) -> "CityYearFrame":
        frame = frame.astype({"city": str, "year": np.int64})
        frame = frame.loc[:, list(cls.COLUMNS)].sort_values(["city", "year"], kind="mergesort").reset_index(drop=True)
        return cls(frame, dict(diagnostics or {}))


@dataclass
class ScalingSummary:
    cities: pd.DataFrame                # city, wap, log_wap, f, diversity, mean_ci, active_industries
    layers: pd.DataFrame                # city, log_wap, decile, f
    correlations: dict[str, float]
    year: int
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def correlation_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"measure": list(self.correlations), "correlation": list(self.correlations.values())})
