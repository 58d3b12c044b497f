"""Diversity and complexity against city size, and the formal rate split by complexity decile."""
from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from Tools.ComplexityTools.complexity_core import city_complexity_summary
from Tools.ComplexityTools.models import ComplexityScores, PresenceMatrix
from Tools.errors import InvalidValue
from Tools.IngestTools.models import EmploymentPanel, PopulationPanel
from .models import ScalingSummary
from .panel_core import formal_rate

log = logging.getLogger(__name__)

N_DECILES = 10


def _correlation(a: pd.Series, b: pd.Series) -> float:
    mask = a.notna() & b.notna()
    a, b = a[mask].to_numpy(float), b[mask].to_numpy(float)
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def complexity_deciles(m: PresenceMatrix, ci: ComplexityScores) -> pd.Series:
    """Decile 1..10 of every industry present in at least one city, ranked by CI (ties by code)."""
    present = [code for code, count in zip(m.industries, m.ubiquity) if count >= 1]
    scores = pd.Series(ci.lookup(present), index=pd.Index(present, name="industry"))
    scores = scores.dropna().sort_index().sort_values(kind="mergesort")
    n = len(scores)
    rank = np.arange(1, n + 1)
    return pd.Series(np.ceil(N_DECILES * rank / n).astype(int), index=scores.index, name="decile")


def scaling_summary(panel: EmploymentPanel, population: PopulationPanel, ci: ComplexityScores,
                    m: PresenceMatrix, year: int) -> ScalingSummary:
    """City-size correlations and the decile layers of the formal rate for one year."""
    if year not in panel.years: raise InvalidValue(f"year {year} is not in the panel")
    rows = panel.frame.loc[panel.frame["year"] == year]
    rates = formal_rate(panel, population)
    rates = rates.loc[rates["year"] == year, ["city", "wap", "f"]]
    cities = city_complexity_summary(m, ci).merge(rates, on="city", how="left")
    active = rows.loc[rows["employment"] > 0].groupby("city")["industry"].nunique()
    cities["active_industries"] = cities["city"].map(active).fillna(0).astype(int)
    cities["log_wap"] = np.log(cities["wap"])
    cities = cities.loc[:, ["city", "wap", "log_wap", "f", "diversity", "mean_ci", "undefined", "active_industries"]]

    correlations = {
        "diversity_log_wap": _correlation(cities["diversity"], cities["log_wap"]),
        "mean_ci_log_wap": _correlation(cities["mean_ci"], cities["log_wap"]),
        "active_industries_log_wap": _correlation(cities["active_industries"], cities["log_wap"]),
    }
    diagnostics = {"undefined_correlations": [name for name, value in correlations.items() if not np.isfinite(value)]}
    if diagnostics["undefined_correlations"]:
        log.warning("scaling %d: correlations %s are undefined", year, diagnostics["undefined_correlations"])

    deciles = complexity_deciles(m, ci)
    scored = rows.assign(decile=rows["industry"].map(deciles)).dropna(subset=["decile"]).astype({"decile": int})
    by_decile = scored.groupby(["city", "decile"])["employment"].sum()
    grid = pd.MultiIndex.from_product([list(cities["city"]), range(1, N_DECILES + 1)], names=["city", "decile"])
    layers = by_decile.reindex(grid, fill_value=0.0).rename("employment").reset_index()
    layers = layers.merge(cities[["city", "wap", "log_wap"]], on="city", how="left")
    layers["f"] = layers["employment"] / layers["wap"]
    layers = layers.loc[:, ["city", "log_wap", "decile", "employment", "f"]]
    return ScalingSummary(cities.reset_index(drop=True), layers, correlations, int(year), diagnostics)
