"""Formal rates, the Bartik shock, the city-year panel and the growth regressions."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from Tools.errors import InvalidValue, MissingPopulation
from Tools.IngestTools.models import AuxCityPanel, EmploymentPanel, PopulationPanel
from .models import CityYearFrame, RegressionResult
from .ols_core import ols

log = logging.getLogger(__name__)


def formal_rate(employment: EmploymentPanel, population: PopulationPanel) -> pd.DataFrame:
    """f = F / P per (city, year); population rows without employment get f = 0."""
    totals = employment.frame.groupby(["city", "year"])["employment"].sum()
    wap = population.series()
    missing = totals.index.difference(wap.index)
    if len(missing):
        city, year = missing[0]
        raise MissingPopulation(f"no working-age population for {len(missing)} city-years with employment, e.g. {city}/{year}")
    frame = wap.to_frame("wap").join(totals.rename("employment"), how="left").fillna({"employment": 0.0})
    frame["f"] = frame["employment"] / frame["wap"]
    return frame.reset_index().loc[:, ["city", "year", "employment", "wap", "f"]]


def bartik(panel: EmploymentPanel) -> pd.DataFrame:
    """Shift-share shock B[c, t] = sum_i s[c, i, t-1] * g[-c, i, t].

    ``g`` is the log growth of national employment in industry i with city c
    left out. Industries whose leave-one-out total is zero in either year add
    nothing and are counted in ``undefined``.
    """
    cube, cities, industries, years = panel.cube()
    national = cube.sum(axis=0)
    rows = []
    for t in range(1, len(years)):
        if years[t] - years[t - 1] != 1:
            continue
        previous = cube[:, :, t - 1]; current = cube[:, :, t]
        city_totals = previous.sum(axis=1)
        loo_prev = national[None, :, t - 1] - previous
        loo_curr = national[None, :, t] - current
        defined = (loo_prev > 0) & (loo_curr > 0)
        growth = np.zeros_like(loo_prev)
        np.log(np.divide(loo_curr, loo_prev, out=np.ones_like(loo_prev), where=defined), out=growth, where=defined)
        for c, city in enumerate(cities):
            if city_totals[c] <= 0:
                continue
            share = previous[c] / city_totals[c]
            undefined = int(((share > 0) & ~defined[c]).sum())
            rows.append({"city": city, "year": int(years[t]), "bartik": float(share @ growth[c]), "undefined": undefined})
    frame = pd.DataFrame(rows, columns=["city", "year", "bartik", "undefined"])
    total_undefined = int(frame["undefined"].sum()) if len(frame) else 0
    if total_undefined:
        log.warning("bartik: %d city-industry shares with undefined leave-one-out growth contribute 0", total_undefined)
    if frame.empty:
        log.warning("bartik needs two consecutive years; panel years are %s", years)
    return frame.sort_values(["city", "year"], kind="mergesort").reset_index(drop=True)


def _lagged(frame: pd.DataFrame, column: str, name: str) -> pd.DataFrame:
    lagged = frame.loc[:, ["city", "year", column]].copy()
    lagged["year"] = lagged["year"] + 1
    return lagged.rename(columns={column: name})


def build_city_year_frame(employment: EmploymentPanel, population: PopulationPanel, potential: pd.DataFrame,
                          aux: AuxCityPanel | None = None) -> CityYearFrame:
    """Join formal rates, their lags, lagged potential, Bartik and the controls.

    ``potential`` has columns city, year, cp. Rows without a lagged formal
    rate or lagged potential are left out and counted.
    """
    missing = {"city", "year", "cp"} - set(potential.columns)
    if missing: raise InvalidValue(f"potential frame is missing columns {sorted(missing)}")
    rates = formal_rate(employment, population)
    frame = rates.loc[:, ["city", "year", "f", "wap"]]
    frame = frame.merge(_lagged(rates, "f", "f_lag"), on=["city", "year"], how="left")
    cp = potential.loc[:, ["city", "year", "cp"]].astype({"city": str, "year": np.int64})
    frame = frame.merge(_lagged(cp, "cp", "cp_lag"), on=["city", "year"], how="left")
    frame = frame.merge(bartik(employment).drop(columns="undefined"), on=["city", "year"], how="left")
    if aux is not None:
        controls = aux.frame.copy()
        for name in ("inst_quality", "edu_quality"):
            if name not in controls.columns:
                controls[name] = np.nan
        frame = frame.merge(controls.loc[:, ["city", "year", "govexp_pc", "inst_quality", "edu_quality"]],
                            on=["city", "year"], how="left")
        frame = frame.merge(_lagged(controls, "govexp_pc", "govexp_lag"), on=["city", "year"], how="left")
        frame["d_govexp"] = frame["govexp_pc"] - frame["govexp_lag"]
    else:
        frame["d_govexp"] = np.nan; frame["inst_quality"] = np.nan; frame["edu_quality"] = np.nan
    frame["d_f"] = frame["f"] - frame["f_lag"]
    frame["log_wap"] = np.log(frame["wap"])
    complete = frame["f_lag"].notna() & frame["cp_lag"].notna()
    diagnostics = {
        "rows": int(len(frame)),
        "missing_lag": int((~complete).sum()),
        "missing_f_lag": int(frame["f_lag"].isna().sum()),
        "missing_cp_lag": int(frame["cp_lag"].isna().sum()),
    }
    log.info("city-year frame: %d rows kept, %d without lags", int(complete.sum()), diagnostics["missing_lag"])
    return CityYearFrame.from_frame(frame.loc[complete], diagnostics)


@dataclass(frozen=True)
class GrowthSpec:
    name: str
    regressors: tuple[str, ...]
    interactions: tuple[tuple[str, str], ...] = ()
    year_fe: bool = True

    @property
    def terms(self) -> tuple[str, ...]:
        return self.regressors + tuple(f"{a}:{b}" for a, b in self.interactions)


_CORE = ("f_lag", "cp_lag", "bartik", "d_govexp")
_QUALITY = ("inst_quality", "edu_quality")

GROWTH_SPECS: dict[str, GrowthSpec] = {
    "table5_col1": GrowthSpec("table5_col1", ("f_lag",)),
    "table5_col2": GrowthSpec("table5_col2", ("f_lag", "cp_lag")),
    "table5_col3": GrowthSpec("table5_col3", _CORE),
    "table5_col4": GrowthSpec("table5_col4", _CORE, (("cp_lag", "bartik"), ("cp_lag", "d_govexp"))),
    "table6_col1": GrowthSpec("table6_col1", ("f_lag", "bartik", "d_govexp") + _QUALITY),
    "table6_col2": GrowthSpec("table6_col2", ("f_lag", "cp_lag") + _QUALITY),
    "table6_col3": GrowthSpec("table6_col3", _CORE + _QUALITY),
}


def spec_name(table: int, column: int) -> str:
    name = f"table{table}_col{column}"
    if name not in GROWTH_SPECS: raise InvalidValue(f"unknown growth specification {name}; expected one of {sorted(GROWTH_SPECS)}")
    return name


def growth_regression(frame: CityYearFrame, spec: GrowthSpec | str, *, city_fe: bool = False,
                      se_mode: str = "robust") -> RegressionResult:
    """Regress the annual change in the formal rate on the spec's regressors."""
    spec = GROWTH_SPECS[spec] if isinstance(spec, str) else spec
    data = frame.frame
    X = pd.DataFrame(index=data.index)
    for name in spec.regressors:
        X[name] = data[name]
    for a, b in spec.interactions:
        X[f"{a}:{b}"] = data[a] * data[b]
    dummies = {}
    if spec.year_fe:
        dummies["year"] = data["year"].to_numpy()
    if city_fe:
        dummies["city"] = data["city"].to_numpy()
    result = ols(data["d_f"], X, dummies=dummies or None, se_mode=se_mode, name=spec.name)
    if result.vif_flag:
        log.warning("%s: max VIF %.2f exceeds 10", spec.name, result.max_vif)
    result.diagnostics["city_fe"] = city_fe
    return result


def cp_growth_scatter(employment: EmploymentPanel, population: PopulationPanel, potential: pd.DataFrame,
                      first_year: int | None = None, last_year: int | None = None) -> tuple[pd.DataFrame, RegressionResult]:
    """Initial potential against the change in formal rate over the whole period."""
    rates = formal_rate(employment, population)
    years = sorted(rates["year"].unique())
    first_year = int(years[0]) if first_year is None else first_year
    last_year = int(years[-1]) if last_year is None else last_year
    if first_year >= last_year: raise InvalidValue(f"need two distinct years, got {first_year} and {last_year}")
    start = rates.loc[rates["year"] == first_year, ["city", "f"]].rename(columns={"f": "f_first"})
    end = rates.loc[rates["year"] == last_year, ["city", "f"]].rename(columns={"f": "f_last"})
    cp = potential.loc[potential["year"] == first_year, ["city", "cp"]].astype({"city": str})
    table = start.merge(end, on="city").merge(cp, on="city").sort_values("city", kind="mergesort").reset_index(drop=True)
    table["d_f"] = table["f_last"] - table["f_first"]
    result = ols(table["d_f"], table[["cp"]], name="cp_growth")
    table["fitted"] = result.fitted
    table = table.rename(columns={"cp": "cp_initial"})
    return table.loc[:, ["city", "cp_initial", "f_first", "f_last", "d_f", "fitted"]], result
