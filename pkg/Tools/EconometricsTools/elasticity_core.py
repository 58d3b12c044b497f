"""Scaling of industry employment with city size, and how it varies with complexity."""
from __future__ import annotations

import logging
from typing import Mapping, Union

import numpy as np
import pandas as pd

from Tools.ComplexityTools.models import ComplexityScores
from Tools.errors import InvalidValue, MissingPopulation
from Tools.IngestTools.models import EmploymentPanel, PopulationPanel
from .models import ElasticityCurve, TwoGroupSlopes
from .ols_core import ols

log = logging.getLogger(__name__)

ScoresByYear = Union[ComplexityScores, Mapping[int, ComplexityScores]]


def _observations(panel: EmploymentPanel, population: PopulationPanel, ci: ScoresByYear) -> pd.DataFrame:
    """(city, industry, year) rows with F > 0, log F, log P and the industry's CI."""
    rows = panel.frame.loc[panel.frame["employment"] > 0].copy()
    rows = rows.merge(population.frame, on=["city", "year"], how="left")
    if rows["wap"].isna().any():
        row = rows.loc[rows["wap"].isna()].iloc[0]
        raise MissingPopulation(f"no working-age population for {row['city']}/{row['year']}")
    if isinstance(ci, ComplexityScores):
        rows["ci"] = ci.lookup(rows["industry"])
    else:
        rows["ci"] = np.nan
        for year, scores in ci.items():
            mask = rows["year"] == year
            rows.loc[mask, "ci"] = scores.lookup(rows.loc[mask, "industry"])
    unscored = rows["ci"].isna()
    if unscored.any():
        log.warning("%d observations without a complexity score are left out", int(unscored.sum()))
    rows = rows.loc[~unscored].reset_index(drop=True)
    if rows.empty: raise InvalidValue("no observations with positive employment and a complexity score")
    rows["log_f"] = np.log(rows["employment"])
    rows["log_p"] = np.log(rows["wap"])
    return rows


def elasticity_regression(panel: EmploymentPanel, population: PopulationPanel, ci: ScoresByYear,
                          year_fe: bool = True, grid: int = 21, *, se_mode: str = "robust") -> ElasticityCurve:
    """log F = a + b log P + x CI + g log P * CI (+ year dummies); elasticity(CI) = b + g CI."""
    if grid < 2: raise ValueError(f"grid needs at least two points, got {grid}")
    rows = _observations(panel, population, ci)
    X = pd.DataFrame({"log_p": rows["log_p"], "ci": rows["ci"], "log_p:ci": rows["log_p"] * rows["ci"]})
    dummies = {"year": rows["year"].to_numpy()} if year_fe else None
    result = ols(rows["log_f"], X, dummies=dummies, se_mode=se_mode, name="elasticity")
    b = result.terms.index("log_p"); g = result.terms.index("log_p:ci")
    curve = ElasticityCurve(result.coefficient("log_p"), result.coefficient("log_p:ci"),
                            result.std_error("log_p"), result.std_error("log_p:ci"), float(result.cov[b, g]),
                            np.linspace(0.0, 1.0, grid), result)
    log.info("elasticity: beta %.4f (%.4f), gamma %.4f (%.4f), %d observations",
             curve.beta, curve.se_beta, curve.gamma, curve.se_gamma, result.n_obs)
    return curve


def two_group_slopes(panel: EmploymentPanel, population: PopulationPanel, ci: ScoresByYear,
                     share: float = 0.1, *, year_fe: bool = True, se_mode: str = "robust") -> TwoGroupSlopes:
    """Slope of log F on log P for the most and least complex industries, with industry dummies."""
    if not 0.0 < share <= 0.5: raise ValueError(f"share must lie in (0, 0.5], got {share}")
    rows = _observations(panel, population, ci)
    by_industry = rows.groupby("industry")["ci"].mean().sort_index()
    ranked = by_industry.sort_values(kind="mergesort")
    size = max(1, int(np.ceil(share * len(ranked))))
    groups = {"bottom": tuple(ranked.index[:size]), "top": tuple(ranked.index[-size:])}
    results = {}
    for label, industries in groups.items():
        subset = rows.loc[rows["industry"].isin(industries)].reset_index(drop=True)
        dummies = {"industry": subset["industry"].to_numpy()}
        if year_fe:
            dummies["year"] = subset["year"].to_numpy()
        results[label] = ols(subset["log_f"], subset[["log_p"]], dummies=dummies, se_mode=se_mode, name=f"slope_{label}")
    slopes = TwoGroupSlopes(results["top"], results["bottom"], groups["top"], groups["bottom"])
    log.info("two-group slopes: top %.4f, bottom %.4f", slopes.top_slope, slopes.bottom_slope)
    return slopes
