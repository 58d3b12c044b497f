"""
Least-squares engine behind every table.

The design is assembled in a fixed order (intercept, dummy blocks, then the
named regressors) and screened column by column with Gram-Schmidt: a column
that lies in the span of the columns before it is dropped and reported.
Fitting itself is statsmodels OLS; robust standard errors are HC1.

Information criteria follow the Gaussian log-likelihood up to constants:

    AIC = N ln(RSS / N) + 2p
    BIC = N ln(RSS / N) + p ln N
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from statsmodels.stats.outliers_influence import variance_inflation_factor

from Tools.errors import DegenerateResponse, RankDeficient
from .models import RegressionResult

log = logging.getLogger(__name__)

SE_MODES = ("robust", "classical")
INTERCEPT = "const"
COLLINEAR_TOL = 1e-8


def information_criteria(rss: float, n_obs: int, n_params: int) -> tuple[float, float]:
    with np.errstate(divide="ignore"):
        base = n_obs * np.log(rss / n_obs)
    return float(base + 2 * n_params), float(base + n_params * np.log(n_obs))


def _dummy_block(dummies: Mapping[str, Sequence] | pd.DataFrame | None, index: pd.Index) -> pd.DataFrame:
    if dummies is None:
        return pd.DataFrame(index=index)
    if isinstance(dummies, pd.DataFrame):
        block = dummies.copy()
        block.index = index
        return block
    return pd.DataFrame({name: pd.Series(list(values), index=index) for name, values in dummies.items()}, index=index)


def _screen(design: pd.DataFrame) -> list[str]:
    """Columns that are numerically in the span of the columns before them."""
    basis: list[np.ndarray] = []
    collinear = []
    for name in design.columns:
        column = design[name].to_numpy(dtype=float)
        norm = np.linalg.norm(column)
        residual = column.copy()
        for _ in range(2):
            for vector in basis:
                residual -= (vector @ residual) * vector
        remaining = np.linalg.norm(residual)
        if norm == 0 or remaining <= COLLINEAR_TOL * norm:
            collinear.append(name)
            continue
        basis.append(residual / remaining)
    return collinear


def ols(y: Sequence[float] | pd.Series, X: pd.DataFrame | None = None, *,
        dummies: Mapping[str, Sequence] | pd.DataFrame | None = None, se_mode: str = "robust",
        add_intercept: bool = True, drop_collinear: bool = True, name: str = "") -> RegressionResult:
    """
    Fit y on the regressors in ``X`` plus categorical dummy blocks.

    Parameters
    ----------
    y : response, aligned with the rows of X
    X : named regressors (may be empty or None for intercept-only models)
    dummies : {name: labels} or a frame of label columns; each block enters
        with its first category dropped
    se_mode : "robust" (HC1, default) or "classical"
    drop_collinear : drop perfectly collinear regressors instead of raising
    """
    if se_mode not in SE_MODES: raise ValueError(f"se_mode must be one of {SE_MODES}, got {se_mode!r}")
    if X is None:
        X = pd.DataFrame(index=pd.RangeIndex(len(y)))
    X = X.reset_index(drop=True).astype(float)
    response = pd.Series(np.asarray(y, dtype=float), index=X.index, name="y")
    labels = _dummy_block(dummies, X.index)

    keep = response.notna() & X.notna().all(axis=1) & labels.notna().all(axis=1)
    skipped = int((~keep).sum())
    if skipped:
        log.info("%s: %d rows with missing values left out", name or "ols", skipped)
    response, X, labels = response.loc[keep], X.loc[keep], labels.loc[keep]
    if len(response) and response.var(ddof=0) == 0:
        raise DegenerateResponse(f"{name or 'response'} has zero variance over {len(response)} rows")

    blocks = []
    if add_intercept:
        blocks.append(pd.DataFrame({INTERCEPT: np.ones(len(response))}, index=response.index))
    dummy_names: list[str] = []
    for column in labels.columns:
        block = pd.get_dummies(labels[column].astype(str), prefix=column, prefix_sep="=", drop_first=True, dtype=float)
        dummy_names += list(block.columns)
        blocks.append(block)
    blocks.append(X)
    design = pd.concat(blocks, axis=1)

    collinear = _screen(design)
    regressor_drops = [column for column in collinear if column in X.columns]
    if regressor_drops and not drop_collinear:
        raise RankDeficient(f"regressors {regressor_drops} are perfectly collinear with earlier columns")
    if collinear:
        log.warning("%s: dropped collinear columns %s", name or "ols", collinear)
    design = design.drop(columns=collinear)
    n_obs, n_params = design.shape
    if n_params == 0: raise RankDeficient("the design has no columns left to estimate")
    if n_obs <= n_params:
        raise RankDeficient(f"{n_obs} observations are not enough for {n_params} parameters")

    exog = design.to_numpy(dtype=float)
    endog = response.to_numpy(dtype=float)
    model = sm.OLS(endog, exog)
    classical = model.fit()
    robust = model.fit(cov_type="HC1")
    coef = np.asarray(classical.params, dtype=float)
    se_classical = np.asarray(classical.bse, dtype=float)
    se_robust = np.asarray(robust.bse, dtype=float)
    selected = robust if se_mode == "robust" else classical
    se = se_robust if se_mode == "robust" else se_classical
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    df_resid = n_obs - n_params
    p = 2.0 * stats.t.sf(np.abs(t), df_resid)

    residuals = endog - exog @ coef
    rss = float(residuals @ residuals)
    tss = float(((endog - endog.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    adj_r2 = 1.0 - (1.0 - r2) * (n_obs - 1) / df_resid
    aic, bic = information_criteria(rss, n_obs, n_params)

    terms = list(design.columns)
    vif = {}
    for position, term in enumerate(terms):
        if term in X.columns and n_params > 1:
            vif[term] = float(variance_inflation_factor(exog, position))
        elif term in X.columns:
            vif[term] = 1.0

    return RegressionResult(
        terms=terms,
        coef=coef,
        se=se,
        se_robust=se_robust,
        se_classical=se_classical,
        t=t,
        p=p,
        cov=np.asarray(selected.cov_params(), dtype=float),
        r2=r2,
        adj_r2=adj_r2,
        aic=aic,
        bic=bic,
        rss=rss,
        vif=vif,
        n_obs=int(n_obs),
        n_params=int(n_params),
        dropped=collinear,
        dummy_terms=[term for term in dummy_names if term in terms],
        se_mode=se_mode,
        residuals=residuals,
        fitted=endog - residuals,
        name=name,
        diagnostics={"rows_skipped": skipped},
    )
