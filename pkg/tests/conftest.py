from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from Tools.ComplexityTools import PresenceMatrix, binarize, compute_complexity, compute_rca
from Tools.EconometricsTools.synthetic import SyntheticConfig, generate_synthetic
from Tools.IngestTools import EmploymentPanel, PopulationPanel
from Tools.RelatednessTools import build_relatedness, complexity_potential, density, skill_proximity


def employment_rows(matrix, cities, industries, year=2010) -> pd.DataFrame:
    """Long employment rows for every positive cell of a city x industry matrix."""
    matrix = np.asarray(matrix, dtype=float)
    c, i = np.nonzero(matrix > 0)
    return pd.DataFrame({
        "city": [cities[k] for k in c],
        "industry": [industries[k] for k in i],
        "year": year,
        "employment": matrix[c, i],
    })


def make_panel(matrix, cities=None, industries=None, year=2010) -> EmploymentPanel:
    matrix = np.asarray(matrix, dtype=float)
    cities = cities or [f"{11 + k:02d}001" for k in range(matrix.shape[0])]
    industries = industries or [f"{15 + k // 9:02d}{k % 9 + 1:02d}" for k in range(matrix.shape[1])]
    return EmploymentPanel(employment_rows(matrix, cities, industries, year))


def make_presence(matrix, year=2010) -> PresenceMatrix:
    matrix = np.asarray(matrix, dtype=float)
    cities = tuple(f"c{k:02d}" for k in range(matrix.shape[0]))
    industries = tuple(f"{15 + k // 9:02d}{k % 9 + 1:02d}" for k in range(matrix.shape[1]))
    return PresenceMatrix(matrix, cities, industries, year)


def nested_presence(n: int) -> np.ndarray:
    """City c hosts industries 0..c (lower triangle)."""
    return np.tril(np.ones((n, n)))


def write_csv(path: Path, text: str) -> Path:
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


@pytest.fixture
def csv_file(tmp_path):
    def _write(name: str, text: str) -> Path:
        return write_csv(tmp_path / name, text)
    return _write


@pytest.fixture
def population_for():
    def _population(panel: EmploymentPanel, scale: float = 3.0) -> PopulationPanel:
        totals = panel.frame.groupby(["city", "year"], as_index=False)["employment"].sum()
        return PopulationPanel(totals.assign(wap=totals["employment"] * scale).drop(columns="employment"))
    return _population


@pytest.fixture(scope="session")
def small_bundle():
    return generate_synthetic(SyntheticConfig(seed=7, n_cities=20, n_industries=32, n_divisions=4, n_years=3,
                                              n_firms=300, n_rural=4))


@pytest.fixture(scope="session")
def bundle():
    return generate_synthetic(SyntheticConfig(seed=11))


def potential_table(panel: EmploymentPanel, flows) -> pd.DataFrame:
    """Complexity potential per (city, year) from realised presence and pooled flows."""
    relatedness = build_relatedness(skill_proximity(flows))
    parts = []
    for year in panel.years:
        presence = binarize(compute_rca(panel, year))
        scores = compute_complexity(presence, cross_check=False)
        parts.append(complexity_potential(density(relatedness, presence), scores).to_frame())
    return pd.concat(parts, ignore_index=True)
