import numpy as np
import pandas as pd
import pytest

from tests.conftest import make_presence, nested_presence, potential_table
from Tools.ComplexityTools import ComplexityScores, binarize, compute_complexity, compute_rca
from Tools.EconometricsTools import (
    CityYearFrame,
    ElasticityCurve,
    bartik,
    build_city_year_frame,
    complexity_deciles,
    cp_growth_scatter,
    elasticity_regression,
    firm_regressions,
    formal_rate,
    growth_regression,
    scaling_summary,
    theil_entropy,
    two_group_slopes,
)
from Tools.EconometricsTools.panel_core import spec_name
from Tools.errors import InvalidValue, MissingPopulation, NonPositiveWage
from Tools.IngestTools import EmploymentPanel, PopulationPanel, filter_sectors


def panel_of(rows) -> EmploymentPanel:
    return EmploymentPanel(pd.DataFrame(rows, columns=["city", "industry", "year", "employment"]))


def population_of(rows) -> PopulationPanel:
    return PopulationPanel(pd.DataFrame(rows, columns=["city", "year", "wap"]))


def first_year(panel: EmploymentPanel) -> EmploymentPanel:
    return EmploymentPanel(panel.frame.loc[panel.frame["year"] == panel.years[0]])


def test_formal_rate():
    employment = panel_of([("05001", "1511", 2010, 30.0), ("05001", "2411", 2010, 10.0)])
    population = population_of([("05001", 2010, 100.0), ("08001", 2010, 50.0)])
    rates = formal_rate(employment, population).set_index("city")
    assert rates.loc["05001", "f"] == pytest.approx(0.4)
    assert rates.loc["08001", "f"] == 0.0
    with pytest.raises(MissingPopulation):
        formal_rate(employment, population_of([("08001", 2010, 50.0)]))


def test_bartik_by_hand(caplog):
    employment = panel_of([
        ("A", "1511", 2010, 10.0), ("A", "1511", 2011, 20.0),
        ("B", "1511", 2010, 10.0), ("B", "2411", 2010, 10.0),
        ("B", "1511", 2011, 10.0), ("B", "2411", 2011, 40.0),
    ])
    shock = bartik(employment).set_index("city")
    assert shock.loc["A", "bartik"] == pytest.approx(0.0)
    assert shock.loc["B", "bartik"] == pytest.approx(0.5 * np.log(2.0))
    assert shock.loc["B", "undefined"] == 1
    assert (shock["year"] == 2011).all()
    assert "undefined leave-one-out" in caplog.text


def test_bartik_skips_year_gaps(caplog):
    employment = panel_of([("A", "1511", 2010, 1.0), ("B", "1511", 2012, 2.0), ("A", "1511", 2012, 3.0)])
    assert bartik(employment).empty
    assert "two consecutive years" in caplog.text


def test_city_year_frame_lags():
    employment = panel_of([
        ("A", "1511", 2010, 10.0), ("A", "1511", 2011, 12.0), ("A", "1511", 2012, 15.0),
        ("B", "1511", 2010, 5.0), ("B", "1511", 2011, 4.0), ("B", "1511", 2012, 6.0),
    ])
    population = population_of([(city, year, 100.0) for city in "AB" for year in (2010, 2011, 2012)])
    potential = pd.DataFrame({"city": ["A", "B", "A", "B"], "year": [2010, 2010, 2011, 2011], "cp": [0.1, 0.2, 0.3, 0.4]})
    frame = build_city_year_frame(employment, population, potential)
    assert isinstance(frame, CityYearFrame)
    data = frame.frame.set_index(["city", "year"])
    assert len(frame) == 4
    assert data.loc[("A", 2011), "f_lag"] == pytest.approx(0.10)
    assert data.loc[("A", 2011), "d_f"] == pytest.approx(0.02)
    assert data.loc[("B", 2012), "cp_lag"] == pytest.approx(0.4)
    assert frame.diagnostics["missing_lag"] == 2
    assert data["d_govexp"].isna().all()


def test_spec_names():
    assert spec_name(5, 3) == "table5_col3"
    with pytest.raises(InvalidValue):
        spec_name(7, 1)


@pytest.fixture(scope="module")
def growth_frame(bundle):
    employment = filter_sectors(bundle.employment)
    potential = potential_table(employment, bundle.flows)
    return build_city_year_frame(employment, bundle.population, potential, bundle.aux)


def test_growth_regression_recovers_the_planted_coupling(growth_frame, bundle):
    result = growth_regression(growth_frame, "table5_col2")
    assert result.coefficient("cp_lag") == pytest.approx(bundle.planted["coupling"], abs=0.05)
    assert result.p_value("cp_lag") < 0.01
    assert result.dummy_terms and all(term.startswith("year=") for term in result.dummy_terms)


def test_growth_regression_with_interactions_and_city_dummies(growth_frame):
    result = growth_regression(growth_frame, "table5_col4", city_fe=True, se_mode="classical")
    assert "cp_lag:bartik" in result.terms
    assert any(term.startswith("city=") for term in result.dummy_terms)
    assert result.diagnostics["city_fe"] is True
    assert result.se_mode == "classical"


def test_quality_specs_skip_rows_without_indices(growth_frame):
    result = growth_regression(growth_frame, "table6_col3")
    assert result.diagnostics["rows_skipped"] > 0
    assert result.n_obs < len(growth_frame)


def test_cp_growth_scatter(bundle):
    employment = filter_sectors(bundle.employment)
    potential = potential_table(employment, bundle.flows)
    table, result = cp_growth_scatter(employment, bundle.population, potential)
    assert len(table) == bundle.config.n_cities
    assert table.columns.tolist() == ["city", "cp_initial", "f_first", "f_last", "d_f", "fitted"]
    assert result.coefficient("cp") > 0
    with pytest.raises(InvalidValue):
        cp_growth_scatter(employment, bundle.population, potential, 2012, 2012)


def test_elasticity_band_by_hand():
    curve = ElasticityCurve(0.8, 0.3, 0.1, 0.2, -0.01, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(curve.elasticity, [0.8, 0.95, 1.1])
    expected = 1.96 * np.sqrt([0.01, 0.01 + 0.25 * 0.04 - 0.01, 0.01 + 0.04 - 0.02])
    np.testing.assert_allclose(curve.band, expected)
    frame = curve.to_frame()
    np.testing.assert_allclose(frame["upper"] - frame["lower"], 2 * expected)


def test_elasticity_recovers_planted_parameters(bundle):
    panel = first_year(filter_sectors(bundle.employment))
    curve = elasticity_regression(panel, bundle.population, bundle.planted_ci)
    assert curve.beta == pytest.approx(bundle.planted["beta"], abs=0.1)
    assert curve.gamma == pytest.approx(bundle.planted["gamma"], abs=0.1)
    assert len(curve.to_frame()) == 21


def test_elasticity_rejects_a_tiny_grid(bundle):
    with pytest.raises(ValueError):
        elasticity_regression(bundle.employment, bundle.population, bundle.planted_ci, grid=1)


def test_elasticity_accepts_scores_by_year(small_bundle):
    panel = filter_sectors(small_bundle.employment)
    scores = {year: compute_complexity(binarize(compute_rca(panel, year))) for year in panel.years}
    curve = elasticity_regression(panel, small_bundle.population, scores)
    assert curve.result.n_obs == int((panel.frame["employment"] > 0).sum())


def test_complex_industries_scale_faster(bundle):
    panel = first_year(filter_sectors(bundle.employment))
    slopes = two_group_slopes(panel, bundle.population, bundle.planted_ci, share=0.5)
    assert slopes.gap > 0
    assert len(slopes.top_industries) == len(slopes.bottom_industries) == 30
    assert not set(slopes.top_industries) & set(slopes.bottom_industries)
    assert slopes.to_frame()["group"].tolist() == ["top", "bottom"]
    with pytest.raises(ValueError):
        two_group_slopes(panel, bundle.population, bundle.planted_ci, share=0.6)


def test_theil_entropy():
    assert theil_entropy([5.0, 5.0, 5.0]) == 0.0
    mixed = 0.5 * (0.5 * np.log(0.5) + 1.5 * np.log(1.5))
    assert theil_entropy([1.0, 3.0]) == pytest.approx(mixed)
    assert theil_entropy([10.0, 30.0]) == pytest.approx(mixed)
    assert theil_entropy([1.0, 1.0, 4.0]) == pytest.approx(np.log(2.0) / 3, abs=1e-12)
    assert theil_entropy([1e-9, 1e-9, 1e-9, 1.0]) == pytest.approx(np.log(4), rel=1e-6)
    with pytest.raises(NonPositiveWage):
        theil_entropy([1.0, 0.0])
    with pytest.raises(InvalidValue):
        theil_entropy([])


def test_firm_entropy_rises_with_complexity(bundle):
    result = firm_regressions(bundle.firms, bundle.planted_ci, "entropy")
    assert result.coefficient("ci") > 0
    assert result.p_value("ci") < 0.01
    assert result.n_obs == result.diagnostics["rows_scored"] - result.diagnostics["rows_below_min_employees"]


def test_firm_wages_recover_the_planted_premium(bundle):
    result = firm_regressions(bundle.firms, bundle.planted_ci, "wage")
    assert result.coefficient("ci") == pytest.approx(bundle.config.wage_ci_effect, abs=0.05)
    assert result.coefficient("log_employees") == pytest.approx(0.05, abs=0.02)


def test_firm_entropy_with_hr_controls(bundle):
    result = firm_regressions(bundle.firms, bundle.planted_ci, "entropy", hr_controls=True)
    assert "retention" in result.terms


def test_unknown_firm_spec(bundle):
    with pytest.raises(ValueError):
        firm_regressions(bundle.firms, bundle.planted_ci, "tenure")


def test_complexity_deciles_are_balanced():
    presence = make_presence(nested_presence(20))
    deciles = complexity_deciles(presence, compute_complexity(presence))
    assert deciles.value_counts().sort_index().tolist() == [2] * 10
    assert deciles.iloc[0] == 1 and deciles.iloc[-1] == 10


def test_scaling_layers_add_up(small_bundle):
    panel = filter_sectors(small_bundle.employment)
    year = panel.years[0]
    presence = binarize(compute_rca(panel, year))
    summary = scaling_summary(panel, small_bundle.population, compute_complexity(presence), presence, year)
    totals = summary.layers.groupby("city")["f"].sum()
    rates = summary.cities.set_index("city")["f"]
    pd.testing.assert_series_equal(totals.sort_index(), rates.sort_index(), check_names=False)
    assert summary.correlation_frame()["measure"].tolist() == ["diversity_log_wap", "mean_ci_log_wap",
                                                               "active_industries_log_wap"]
    with pytest.raises(InvalidValue):
        scaling_summary(panel, small_bundle.population, compute_complexity(presence), presence, 1999)


def test_planted_scores_cover_every_industry(bundle):
    panel = filter_sectors(bundle.employment)
    assert set(panel.industries) <= set(bundle.planted_ci.industries)
    assert isinstance(bundle.planted_ci, ComplexityScores)
