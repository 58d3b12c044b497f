import numpy as np
import pandas as pd
import pytest

from Tools.errors import (
    DuplicateKey,
    InvalidCode,
    InvalidValue,
    MissingColumn,
    NegativeEmployment,
    NonNumericValue,
    NonPositiveWage,
    UnmappedMunicipality,
)
from Tools.IngestTools import (
    DEFAULT_EXCLUDED_DIVISIONS,
    EmploymentPanel,
    FlowMatrix,
    PopulationPanel,
    aggregate_population,
    aggregate_to_cities,
    filter_sectors,
    load_dataset,
    write_dataset,
)

EMPLOYMENT = """
city,industry,year,employment
05001,1511,2010,10
05001,2411,2010,4.5
08001,1511,2010,7
"""


def test_load_well_formed_employment(csv_file):
    panel = load_dataset(csv_file("employment.csv", EMPLOYMENT), "employment")
    assert len(panel) == 3
    assert panel.cities == ("05001", "08001")
    assert panel.industries == ("1511", "2411")
    assert panel.years == (2010,)
    assert panel.total == pytest.approx(21.5)
    assert panel.diagnostics["rows_read"] == 3
    assert panel.diagnostics["dropped"] == []


def test_codes_keep_leading_zeros_and_bom(csv_file):
    path = csv_file("employment.csv", EMPLOYMENT)
    path.write_bytes(b"\xef\xbb\xbf" + path.read_bytes())
    panel = load_dataset(path, "employment")
    assert panel.cities[0] == "05001"


def test_duplicate_key_names_the_row(csv_file):
    path = csv_file("employment.csv", EMPLOYMENT + "05001,1511,2010,3\n")
    with pytest.raises(DuplicateKey) as info:
        load_dataset(path, "employment")
    assert info.value.line == 5
    assert "line 2" in info.value.message


def test_negative_employment(csv_file):
    path = csv_file("employment.csv", "city,industry,year,employment\n05001,1511,2010,-5\n05001,2411,2010,3")
    with pytest.raises(NegativeEmployment) as info:
        load_dataset(path, "employment")
    assert info.value.line == 2


def test_non_numeric_value(csv_file):
    path = csv_file("employment.csv", "city,industry,year,employment\n05001,1511,2010,many")
    with pytest.raises(NonNumericValue):
        load_dataset(path, "employment")


def test_missing_column(csv_file):
    path = csv_file("population.csv", "city,year\n05001,2010")
    with pytest.raises(MissingColumn) as info:
        load_dataset(path, "population")
    assert info.value.line == 1


def test_industry_code_depth(csv_file):
    path = csv_file("employment.csv", "city,industry,year,employment\n05001,151,2010,4")
    with pytest.raises(InvalidCode):
        load_dataset(path, "employment")
    assert len(load_dataset(path, "employment", digits=3)) == 1


def test_permissive_mode_drops_and_records(csv_file):
    path = csv_file("employment.csv", EMPLOYMENT + "05001,1511,2010,3\n08001,2411,2010,-1\n")
    panel = load_dataset(path, "employment", strict=False)
    assert len(panel) == 3
    dropped = panel.diagnostics["dropped"]
    assert [entry["line"] for entry in dropped] == [5, 6]
    assert [entry["error"] for entry in dropped] == ["DuplicateKey", "NegativeEmployment"]


def test_zero_total_city_year_is_rejected(csv_file):
    path = csv_file("employment.csv", "city,industry,year,employment\n05001,1511,2010,0\n08001,1511,2010,2")
    with pytest.raises(InvalidValue) as info:
        load_dataset(path, "employment")
    assert "zero total employment" in str(info.value)


def test_row_order_does_not_change_the_panel(csv_file):
    lines = EMPLOYMENT.strip().splitlines()
    shuffled = "\n".join([lines[0], lines[3], lines[1], lines[2]])
    a = load_dataset(csv_file("a.csv", EMPLOYMENT), "employment")
    b = load_dataset(csv_file("b.csv", shuffled), "employment")
    assert a.equals(b)
    assert a.industry_ids == b.industry_ids == {"1511": 0, "2411": 1}


def test_write_then_load_is_identical(csv_file, tmp_path):
    panel = load_dataset(csv_file("employment.csv", EMPLOYMENT.replace("4.5", "0.1234567890123")), "employment")
    again = load_dataset(write_dataset(panel, tmp_path / "out" / "employment.csv"), "employment")
    assert panel.equals(again)


def test_flows_with_year_column(csv_file):
    path = csv_file("flows.csv", """
industry_from,industry_to,switches,year
1511,2411,3,2010
1511,2411,2,2011
2411,1511,1,2011
""")
    flows = load_dataset(path, "flows")
    assert isinstance(flows, FlowMatrix)
    assert sorted(flows.by_year) == [2010, 2011]
    np.testing.assert_array_equal(flows.counts, [[0, 5], [1, 0]])
    np.testing.assert_array_equal(flows.for_year(2011).counts, [[0, 2], [1, 0]])
    assert flows.pooled().by_year == {}


def test_firm_wages_must_be_positive(csv_file):
    path = csv_file("firms.csv", """
firm,city,industry,year,employees,avg_wage,wage_p25,wage_p75
F1,05001,1511,2010,60,1000,800,0
""")
    with pytest.raises(NonPositiveWage):
        load_dataset(path, "firms")


def test_filter_sectors_removes_excluded_divisions():
    frame = pd.DataFrame({
        "city": ["05001"] * 5,
        "industry": ["1010", "1110", "7511", "9500", "1511"],
        "year": 2010,
        "employment": [1.0, 2.0, 3.0, 4.0, 5.0],
    })
    panel = EmploymentPanel(frame)
    filtered = filter_sectors(panel, DEFAULT_EXCLUDED_DIVISIONS)
    assert filtered.industries == ("1511",)
    assert filtered.total == 5.0
    assert filtered.diagnostics["removed_employment"] == 10.0
    assert filtered.total + filtered.diagnostics["removed_employment"] == panel.total


def test_filter_with_empty_set_is_identity():
    panel = EmploymentPanel(pd.DataFrame({"city": ["05001"], "industry": ["1511"], "year": [2010], "employment": [2.0]}))
    assert filter_sectors(panel, set()).equals(panel)


def test_filter_everything_warns(caplog):
    panel = EmploymentPanel(pd.DataFrame({"city": ["05001"], "industry": ["7511"], "year": [2010], "employment": [2.0]}))
    filtered = filter_sectors(panel, {"75"})
    assert len(filtered) == 0
    assert "removed every record" in caplog.text


def test_filter_rejects_bad_codes():
    panel = EmploymentPanel(pd.DataFrame({"city": ["05001"], "industry": ["1511"], "year": [2010], "employment": [2.0]}))
    with pytest.raises(InvalidCode):
        filter_sectors(panel, {"751"})


def test_aggregate_sums_municipalities():
    frame = pd.DataFrame({"city": ["05001", "05002", "99001"], "industry": ["1511"] * 3, "year": 2010,
                          "employment": [10.0, 5.0, 1.0]})
    panel = EmploymentPanel(frame)
    city = aggregate_to_cities(panel, {"05001": "05001", "05002": "05001", "99001": None})
    assert city.frame["employment"].tolist() == [15.0]
    assert city.diagnostics["dropped_municipalities"] == ["99001"]
    assert city.total + city.diagnostics["removed_employment"] == panel.total


def test_aggregate_identity_crosswalk():
    frame = pd.DataFrame({"city": ["05001", "08001"], "industry": ["1511", "2411"], "year": 2010, "employment": [1.0, 2.0]})
    panel = EmploymentPanel(frame)
    assert aggregate_to_cities(panel, {"05001": "05001", "08001": "08001"}).frame.equals(panel.frame)


def test_aggregate_strict_unmapped():
    panel = EmploymentPanel(pd.DataFrame({"city": ["05001"], "industry": ["1511"], "year": [2010], "employment": [1.0]}))
    with pytest.raises(UnmappedMunicipality):
        aggregate_to_cities(panel, {})
    assert len(aggregate_to_cities(panel, {}, strict=False)) == 0


def test_aggregate_population():
    population = PopulationPanel(pd.DataFrame({"city": ["05001", "05002"], "year": [2010, 2010], "wap": [100.0, 50.0]}))
    merged = aggregate_population(population, {"05001": "05001", "05002": "05001"})
    assert merged.series().to_dict() == {("05001", 2010): 150.0}


def test_synthetic_municipal_layer_conserves_totals(small_bundle):
    from Tools.DelineationTools import delineate_metros

    assignment = delineate_metros(small_bundle.commuting)
    city = aggregate_to_cities(small_bundle.employment_municipal, assignment)
    source = small_bundle.employment_municipal.frame
    mapped = source.assign(city=source["city"].map(assignment.mapping)).dropna(subset=["city"])
    oracle = mapped.groupby(["city", "industry", "year"])["employment"].sum()
    result = city.frame.set_index(["city", "industry", "year"])["employment"]
    pd.testing.assert_series_equal(result.sort_index(), oracle.sort_index(), check_names=False)
