"""Wage entropy inside firms and firm-level wage regressions."""
from __future__ import annotations

import logging
from typing import Iterable

import numpy as np
import pandas as pd

from Tools.ComplexityTools.models import ComplexityScores
from Tools.errors import InvalidValue, NonPositiveWage
from Tools.IngestTools.models import FirmYearTable
from .models import RegressionResult
from .ols_core import ols

log = logging.getLogger(__name__)

FIRM_SPECS = ("entropy", "wage")
MIN_EMPLOYEES = 50


def theil_entropy(wages: Iterable[float]) -> float:
    """T = mean((w / mu) ln(w / mu)); 0 for equal wages, ln N at full concentration."""
    values = np.asarray(list(wages), dtype=float)
    if values.size == 0: raise InvalidValue("Theil entropy needs at least one wage")
    if not np.all(np.isfinite(values)) or (values <= 0).any(): raise NonPositiveWage("wages must be positive and finite")
    ratio = values / values.mean()
    return max(0.0, float(np.mean(ratio * np.log(ratio))))


def firm_regressions(firms: FirmYearTable, ci: ComplexityScores, spec: str = "entropy", *,
                     min_employees: int = MIN_EMPLOYEES, year: int | None = None, hr_controls: bool = False,
                     se_mode: str = "robust") -> RegressionResult:
    """
    Firm-level regressions on industry complexity.

    ``entropy``: Theil entropy of each firm's wage points on CI and log firm
    size (optionally HR covariates), firms with at least ``min_employees``.
    ``wage``: log average wage on CI and log firm size with city and year
    dummies.
    """
    if spec not in FIRM_SPECS: raise ValueError(f"spec must be one of {FIRM_SPECS}, got {spec!r}")
    frame = firms.frame
    if year is not None:
        frame = frame.loc[frame["year"] == year]
    frame = frame.assign(ci=ci.lookup(frame["industry"]))
    unscored = frame["ci"].isna()
    if unscored.any():
        log.warning("%d firm rows in industries without a complexity score are left out", int(unscored.sum()))
    frame = frame.loc[~unscored]
    diagnostics = {"rows_scored": int(len(frame)), "rows_unscored": int(unscored.sum())}

    if spec == "entropy":
        wage_columns = firms.wage_columns
        if not wage_columns: raise InvalidValue("firm table has no wage_p* columns for the entropy regression")
        large = frame["employees"] >= min_employees
        diagnostics["rows_below_min_employees"] = int((~large).sum())
        frame = frame.loc[large].reset_index(drop=True)
        points = frame[wage_columns].to_numpy(dtype=float)
        entropy = np.full(len(frame), np.nan)
        for row, values in enumerate(points):
            values = values[np.isfinite(values)]
            if values.size:
                entropy[row] = theil_entropy(values)
        X = pd.DataFrame({"ci": frame["ci"], "log_employees": np.log(frame["employees"])})
        if hr_controls:
            for name in firms.hr_columns:
                X[name] = frame[name]
        result = ols(entropy, X, se_mode=se_mode, name="firm_entropy")
    else:
        frame = frame.reset_index(drop=True)
        X = pd.DataFrame({"ci": frame["ci"], "log_employees": np.log(frame["employees"])})
        dummies = {"city": frame["city"].to_numpy(), "year": frame["year"].to_numpy()}
        result = ols(np.log(frame["avg_wage"]), X, dummies=dummies, se_mode=se_mode, name="firm_wage")
    result.diagnostics.update(diagnostics)
    if "ci" in result.dropped:
        log.warning("%s: CI does not vary across the sample and was dropped", result.name)
    return result
