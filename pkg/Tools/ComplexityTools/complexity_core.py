"""RCA, presence and economic complexity of industries and cities.

The default method takes the eigenvector of the second-largest eigenvalue of
the row-stochastic industry-industry matrix
``Mt[i, j] = sum_c M[c, i] M[c, j] / (k_c k_i)``. It is solved through the
similar symmetric matrix ``D^-1/2 M^T D_c^-1 M D^-1/2`` after removing the
trivial eigenvector ``sqrt(k_i)``. Reflections iterate the diversity and
ubiquity averages and are standardised after every step.
"""
from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from scipy import linalg, stats

from Tools.errors import DegenerateYear, SingularStructure
from Tools.IngestTools.models import EmploymentPanel
from .models import ComplexityScores, PresenceMatrix, RcaMatrix

log = logging.getLogger(__name__)

METHODS = ("eigenvector", "reflections")
DEGENERACY_TOL = 1e-10


def compute_rca(panel: EmploymentPanel, year: int) -> RcaMatrix:
    """(F_ci / sum_i F_ci) / (sum_c F_ci / sum F) over the panel's full registries."""
    if year not in panel.years: raise DegenerateYear(f"year {year} is not in the panel (years: {panel.years})")
    cities, industries = panel.cities, panel.industries
    employment = panel.matrix(year, cities, industries)
    total = employment.sum()
    if total <= 0: raise DegenerateYear(f"total employment is zero in {year}")
    city_totals = employment.sum(axis=1, keepdims=True)
    national = employment.sum(axis=0, keepdims=True) / total
    shares = np.divide(employment, city_totals, out=np.zeros_like(employment), where=city_totals > 0)
    rca = np.divide(shares, national, out=np.zeros_like(employment), where=national > 0)
    empty_cities = [cities[index] for index in np.flatnonzero(city_totals.ravel() <= 0)]
    empty_industries = [industries[index] for index in np.flatnonzero(national.ravel() <= 0)]
    if empty_cities or empty_industries:
        log.info("RCA %d: %d cities and %d industries without employment get zero rows/columns",
                 year, len(empty_cities), len(empty_industries))
    active_cities = len(cities) - len(empty_cities); active_industries = len(industries) - len(empty_industries)
    if active_cities < 2 or active_industries < 2:
        log.warning("RCA %d computed on %d active cities and %d active industries", year, active_cities, active_industries)
    return RcaMatrix(rca, cities, industries, int(year),
                     {"empty_cities": empty_cities, "empty_industries": empty_industries})


def binarize(rca: RcaMatrix, cutoff: float = 1.0) -> PresenceMatrix:
    """M = 1 where RCA is strictly above the cutoff."""
    if not cutoff > 0: raise ValueError(f"cutoff must be positive, got {cutoff}")
    return PresenceMatrix((rca.values > cutoff).astype(np.int8), rca.cities, rca.industries, rca.year, float(cutoff))


def _standardize(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean()
    spread = centered.std()
    return centered / spread if spread > 0 else np.zeros_like(values)


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def _orient(scores: np.ndarray, presence: np.ndarray) -> np.ndarray:
    """Flip so that scores rise as ubiquity falls; hosting-city diversity breaks a tie."""
    diversity = presence.sum(axis=1); ubiquity = presence.sum(axis=0)
    direction = _correlation(scores, -ubiquity.astype(float))
    if not np.isfinite(direction) or direction == 0:
        hosting = presence.T @ diversity / ubiquity
        direction = _correlation(scores, hosting)
    return -scores if np.isfinite(direction) and direction < 0 else scores


def _eigenvector(presence: np.ndarray) -> tuple[np.ndarray, dict]:
    if presence.all():
        raise SingularStructure("presence matrix is complete; the second eigenvalue is degenerate")
    diversity = presence.sum(axis=1); ubiquity = presence.sum(axis=0)
    scale = 1.0 / np.sqrt(ubiquity)
    co_presence = (presence / diversity[:, None]).T @ presence
    symmetric = scale[:, None] * co_presence * scale[None, :]
    symmetric = 0.5 * (symmetric + symmetric.T)
    trivial = np.sqrt(ubiquity) / np.linalg.norm(np.sqrt(ubiquity))
    eigenvalues, eigenvectors = linalg.eigh(symmetric - np.outer(trivial, trivial))
    second = eigenvalues[-1]
    third = eigenvalues[-2] if eigenvalues.size > 1 else -np.inf
    if second - third <= DEGENERACY_TOL * max(1.0, abs(second)):
        raise SingularStructure(f"second eigenvalue {second:.6g} is degenerate (next {third:.6g})")
    return eigenvectors[:, -1] * scale, {"eigenvalue": float(second), "spectral_gap": float(second - third)}


def _reflections(presence: np.ndarray, iterations: int, tolerance: float) -> tuple[np.ndarray, dict]:
    diversity = presence.sum(axis=1).astype(float); ubiquity = presence.sum(axis=0).astype(float)
    k_city, k_industry = diversity.copy(), ubiquity.copy()
    previous = None
    steps = 0
    converged = False
    for step in range(1, max(int(iterations), 1) + 1):
        k_city, k_industry = (presence @ k_industry) / diversity, (presence.T @ k_city) / ubiquity
        k_city, k_industry = _standardize(k_city), _standardize(k_industry)
        steps = step
        if step % 2:
            continue
        current = k_industry.copy()
        if previous is not None and np.max(np.abs(current - previous)) < tolerance \
                and np.array_equal(np.argsort(current, kind="stable"), np.argsort(previous, kind="stable")):
            converged = True
            previous = current
            break
        previous = current
    scores = previous if previous is not None else k_industry
    return scores, {"iterations": steps, "converged": converged}


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(stats.spearmanr(a, b)[0])


def compute_complexity(m: PresenceMatrix, method: str = "eigenvector", iterations: int = 50,
                       tolerance: float = 1e-10, *, cross_check: bool = True) -> ComplexityScores:
    """Industry and city complexity from a presence matrix.

    All-zero rows and columns are pruned first and receive the minimum score.
    A degenerate eigenproblem falls back to reflections. With ``cross_check``
    the other method also runs and their Spearman correlation is recorded.
    """
    if method not in METHODS: raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    values = m.values.astype(float)
    rows = values.sum(axis=1) > 0; columns = values.sum(axis=0) > 0
    active = values[np.ix_(rows, columns)]
    diagnostics: dict = {
        "pruned_cities": [m.cities[index] for index in np.flatnonzero(~rows)],
        "pruned_industries": [m.industries[index] for index in np.flatnonzero(~columns)],
        "requested_method": method,
    }
    if diagnostics["pruned_cities"] or diagnostics["pruned_industries"]:
        log.warning("complexity: pruned %d empty cities and %d empty industries (imputed at the minimum)",
                    len(diagnostics["pruned_cities"]), len(diagnostics["pruned_industries"]))
    used = method
    if active.shape[1] < 2:
        log.warning("complexity needs at least two present industries, found %d", active.shape[1])
        scores = np.zeros(active.shape[1])
    else:
        scores = None
        if method == "eigenvector":
            try:
                scores, info = _eigenvector(active)
                diagnostics.update(info)
            except SingularStructure as exc:
                log.warning("%s; falling back to reflections", exc)
                diagnostics["fallback"] = str(exc)
                used = "reflections"
        if scores is None:
            scores, info = _reflections(active, iterations, tolerance)
            diagnostics.update(info)
        scores = _orient(scores, active)
        if cross_check:
            other = None
            if used == "eigenvector":
                other, _ = _reflections(active, iterations, tolerance)
            else:
                try:
                    other, _ = _eigenvector(active)
                except SingularStructure:
                    pass
            if other is not None:
                diagnostics["rank_correlation"] = _spearman(scores, _orient(other, active))
    diagnostics["method"] = used

    raw = np.zeros(len(m.industries))
    if scores.size:
        raw[columns] = scores
        raw[~columns] = scores.min()
    raw = _standardize(raw)
    spread = raw.max() - raw.min() if raw.size else 0.0
    ci = (raw - raw.min()) / spread if spread > 0 else np.zeros_like(raw)

    city_raw = np.zeros(len(m.cities))
    if rows.any():
        city_raw[rows] = (values[rows] @ raw) / values[rows].sum(axis=1)
        city_raw[~rows] = city_raw[rows].min()
    city_raw = _standardize(city_raw) if city_raw.size else city_raw
    return ComplexityScores(m.industries, raw, ci, m.cities, city_raw, used, m.year, diagnostics)


def aggregate_complexity(ci: ComplexityScores, panel: EmploymentPanel, level: int = 2,
                         year: int | None = None) -> pd.DataFrame:
    """Employment-weighted mean CI per code prefix of length ``level``."""
    if level < 1 or level > panel.digits: raise ValueError(f"level must lie in 1..{panel.digits}, got {level}")
    frame = panel.frame if year is None else panel.frame.loc[panel.frame["year"] == year]
    weights = frame.groupby("industry")["employment"].sum()
    table = pd.DataFrame({"employment": weights})
    table["ci"] = ci.lookup(table.index)
    unscored = table["ci"].isna()
    if unscored.any():
        log.warning("%d industries have no complexity score and are left out of the aggregation", int(unscored.sum()))
    table = table.loc[~unscored]
    table["group"] = table.index.str[:level]
    table["weighted"] = table["employment"] * table["ci"]
    grouped = table.groupby("group").agg(employment=("employment", "sum"), weighted=("weighted", "sum"),
                                         n_industries=("ci", "size"))
    empty = grouped["employment"] <= 0
    for group in grouped.index[empty]:
        log.warning("group %s has no employment and is skipped", group)
    grouped = grouped.loc[~empty]
    result = pd.DataFrame({
        "group": grouped.index.astype(str),
        "ci": grouped["weighted"] / grouped["employment"],
        "employment": grouped["employment"],
        "n_industries": grouped["n_industries"].astype(int),
    })
    return result.reset_index(drop=True)


def city_complexity_summary(m: PresenceMatrix, ci: ComplexityScores) -> pd.DataFrame:
    """Diversity and mean CI of present industries; zero-diversity cities are flagged undefined."""
    values = m.values.astype(float)
    scores = ci.lookup(m.industries, default=0.0)
    diversity = values.sum(axis=1)
    mean_ci = np.full(len(m.cities), np.nan)
    defined = diversity > 0
    mean_ci[defined] = (values[defined] @ scores) / diversity[defined]
    return pd.DataFrame({
        "city": list(m.cities),
        "diversity": diversity.astype(int),
        "mean_ci": mean_ci,
        "undefined": ~defined,
    })
