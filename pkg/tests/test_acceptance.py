"""Multi-seed recovery and algebra checks on random and synthetic data."""
import numpy as np
import pytest

from tests.conftest import make_panel, potential_table
from Tools.ComplexityTools import binarize, compute_rca
from Tools.EconometricsTools import (
    SyntheticConfig,
    build_city_year_frame,
    elasticity_regression,
    generate_synthetic,
    growth_regression,
    theil_entropy,
    two_group_slopes,
)
from Tools.IngestTools import EmploymentPanel, FlowMatrix, filter_sectors
from Tools.RelatednessTools import build_relatedness, skill_proximity

pytestmark = pytest.mark.slow

SEEDS = range(100)
SMALL = dict(n_cities=30, n_industries=40, n_divisions=4, n_firms=50, n_rural=2)


def test_rca_matches_a_cell_by_cell_evaluation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        matrix = rng.integers(1, 50, size=(10, 15)).astype(float)
        matrix[rng.random(matrix.shape) < 0.2] = 0.0
        rca = compute_rca(make_panel(matrix), 2010)
        total = matrix.sum()
        expected = np.zeros_like(matrix)
        for c in range(10):
            for i in range(15):
                if matrix[:, i].sum() > 0:
                    expected[c, i] = (matrix[c, i] / matrix[c].sum()) / (matrix[:, i].sum() / total)
        np.testing.assert_allclose(rca.values, expected, rtol=0, atol=1e-12)
        clear = np.abs(expected - 1.0) > 1e-9
        np.testing.assert_array_equal(binarize(rca).values[clear], (expected[clear] > 1.0).astype(float))


def test_relatedness_sign_matches_proximity_above_one():
    rng = np.random.default_rng(1)
    codes = [f"15{k + 1:02d}" for k in range(8)]
    for _ in range(1000):
        flows = FlowMatrix(rng.poisson(5.0, (8, 8)).astype(float) + 1.0, codes)
        sp = skill_proximity(flows)
        e = build_relatedness(sp).values
        averaged = (sp.values + sp.values.T) / 2
        off = ~np.eye(8, dtype=bool)
        assert np.array_equal(e, e.T)
        assert np.abs(e).max() <= 1.0
        assert np.array_equal(e[off] > 0, averaged[off] > 1)


def test_theil_is_scale_invariant():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        wages = rng.lognormal(0.0, 1.0, rng.integers(2, 30))
        assert theil_entropy(wages * rng.uniform(0.01, 100.0)) == pytest.approx(theil_entropy(wages), abs=1e-12)


def test_elasticity_and_slope_gap_recover_the_planted_values():
    covered, ordered = 0, 0
    for seed in SEEDS:
        bundle = generate_synthetic(SyntheticConfig(seed=seed, n_years=1, **SMALL))
        panel = filter_sectors(bundle.employment)
        curve = elasticity_regression(panel, bundle.population, bundle.planted_ci)
        covered += (abs(curve.beta - 0.8) <= 3 * curve.se_beta and abs(curve.gamma - 0.3) <= 3 * curve.se_gamma)
        ordered += two_group_slopes(panel, bundle.population, bundle.planted_ci, share=0.5).gap > 0
    assert covered >= 95
    assert ordered >= 95


def growth_p_value(seed: int, coupling: float) -> tuple[float, float]:
    bundle = generate_synthetic(SyntheticConfig(seed=seed, n_years=4, coupling=coupling, **SMALL))
    employment = filter_sectors(bundle.employment)
    frame = build_city_year_frame(employment, bundle.population, potential_table(employment, bundle.flows), bundle.aux)
    result = growth_regression(frame, "table5_col3")
    return result.coefficient("cp_lag"), result.p_value("cp_lag")


def test_growth_regression_power_and_size():
    detected = sum(coef > 0 and p < 0.05 for coef, p in (growth_p_value(seed, 0.2) for seed in SEEDS))
    false_alarms = sum(p < 0.05 for _, p in (growth_p_value(seed, 0.0) for seed in SEEDS))
    assert detected >= 90
    assert false_alarms <= 10


def test_employment_panel_is_row_order_free():
    rng = np.random.default_rng(3)
    matrix = rng.integers(0, 20, size=(6, 9)).astype(float)
    panel = make_panel(matrix)
    shuffled = EmploymentPanel(panel.frame.sample(frac=1.0, random_state=4))
    assert shuffled.equals(panel)
