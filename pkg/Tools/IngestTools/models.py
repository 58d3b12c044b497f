"""Canonical in-memory panels for the ingest stage.

Every panel wraps a pandas frame that is copied, typed and sorted by its key
on construction, so two panels built from the same rows in any order compare
equal through ``equals``. City, municipality and industry codes stay strings;
their integer IDs are positions in the sorted code registries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
import pandas as pd

from Tools.errors import DuplicateKey, InvalidCode, InvalidValue, MissingColumn, NegativeEmployment, NonPositiveWage


HR_COLUMNS = (
    "avg_age",
    "age_sd",
    "retention",
    "wage_increase_mean",
    "wage_increase_sd",
    "women_share",
    "gender_wage_gap",
)
WAGE_PREFIX = "wage_p"
AUX_OPTIONAL = ("inst_quality", "edu_quality")


def _canonical(frame: pd.DataFrame, required: Iterable[str], key: tuple[str, ...], codes: Iterable[str] = (),
               integers: Iterable[str] = (), extra: Iterable[str] = ()) -> pd.DataFrame:
    required = list(required)
    missing = [name for name in required if name not in frame.columns]
    if missing: raise MissingColumn(f"panel is missing required columns {missing}. Found columns: {list(frame.columns)}")
    columns = required + [name for name in extra if name in frame.columns and name not in required]
    result = frame.loc[:, columns].copy()
    for name in columns:
        if name in codes:
            result[name] = result[name].astype(str)
        elif name in integers:
            result[name] = result[name].astype(np.int64)
        else:
            result[name] = result[name].astype(float)
    if key:
        duplicated = result.duplicated(list(key), keep="first")
        if duplicated.any():
            row = result.loc[duplicated].iloc[0]
            raise DuplicateKey(f"duplicate key {tuple(row[name] for name in key)} for columns {key}")
        result = result.sort_values(list(key), kind="mergesort")
    return result.reset_index(drop=True)


def _registry(values: pd.Series) -> tuple:
    return tuple(sorted(values.unique().tolist()))


def industry_code_ok(code: str, digits: int) -> bool:
    return len(code) == digits and code.isdigit()


@dataclass(frozen=True, eq=False)
class EmploymentPanel:
    """Full-year-equivalent formal employment per (city, industry, year)."""

    frame: pd.DataFrame
    digits: int = 4
    diagnostics: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("city", "industry", "year", "employment")
    KEY = ("city", "industry", "year")

    def __post_init__(self):
        frame = _canonical(self.frame, self.COLUMNS, self.KEY, codes=("city", "industry"), integers=("year",))
        if (frame["employment"] < 0).any():
            row = frame.loc[frame["employment"] < 0].iloc[0]
            raise NegativeEmployment(f"negative employment {row['employment']} for {row['city']}/{row['industry']}/{row['year']}")
        bad_codes = ~frame["industry"].map(lambda code: industry_code_ok(code, self.digits)).astype(bool)
        if bad_codes.any():
            raise InvalidCode(f"industry code {frame.loc[bad_codes, 'industry'].iloc[0]!r} is not a {self.digits}-digit code")
        totals = frame.groupby(["city", "year"], sort=False)["employment"].sum()
        if (totals <= 0).any():
            city, year = totals.index[totals <= 0][0]
            raise InvalidValue(f"city {city} has zero total employment in {year}")
        object.__setattr__(self, "frame", frame)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def cities(self) -> tuple[str, ...]:
        return _registry(self.frame["city"])

    @property
    def industries(self) -> tuple[str, ...]:
        return _registry(self.frame["industry"])

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(int(year) for year in sorted(self.frame["year"].unique()))

    @property
    def city_ids(self) -> dict[str, int]:
        return {code: index for index, code in enumerate(self.cities)}

    @property
    def industry_ids(self) -> dict[str, int]:
        return {code: index for index, code in enumerate(self.industries)}

    @property
    def total(self) -> float:
        return float(self.frame["employment"].sum())

    def equals(self, other: "EmploymentPanel") -> bool:
        return isinstance(other, EmploymentPanel) and self.digits == other.digits and self.frame.equals(other.frame)

    def replace(self, frame: pd.DataFrame, **diagnostics: Any) -> "EmploymentPanel":
        return EmploymentPanel(frame, digits=self.digits, diagnostics=dict(diagnostics))

    def matrix(self, year: int, cities: tuple[str, ...] | None = None,
               industries: tuple[str, ...] | None = None) -> np.ndarray:
        """City x industry employment for one year over the given (default: full) registries."""
        cities = self.cities if cities is None else cities
        industries = self.industries if industries is None else industries
        rows = self.frame.loc[self.frame["year"] == year]
        table = rows.pivot(index="city", columns="industry", values="employment")
        return table.reindex(index=list(cities), columns=list(industries)).fillna(0.0).to_numpy(dtype=float)

    def cube(self) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...], tuple[int, ...]]:
        """Employment as a (city, industry, year) array with its registries."""
        cities, industries, years = self.cities, self.industries, self.years
        cube = np.zeros((len(cities), len(industries), len(years)), dtype=float)
        city_pos = self.city_ids; industry_pos = self.industry_ids
        year_pos = {year: index for index, year in enumerate(years)}
        c = self.frame["city"].map(city_pos).to_numpy()
        i = self.frame["industry"].map(industry_pos).to_numpy()
        t = self.frame["year"].map(year_pos).to_numpy()
        cube[c, i, t] = self.frame["employment"].to_numpy(dtype=float)
        return cube, cities, industries, years

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()


@dataclass(frozen=True, eq=False)
class PopulationPanel:
    """Working-age (15+) population per (city, year)."""

    frame: pd.DataFrame
    diagnostics: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("city", "year", "wap")
    KEY = ("city", "year")

    def __post_init__(self):
        frame = _canonical(self.frame, self.COLUMNS, self.KEY, codes=("city",), integers=("year",))
        if (frame["wap"] <= 0).any():
            row = frame.loc[frame["wap"] <= 0].iloc[0]
            raise InvalidValue(f"working-age population must be positive, got {row['wap']} for {row['city']}/{row['year']}")
        object.__setattr__(self, "frame", frame)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def cities(self) -> tuple[str, ...]:
        return _registry(self.frame["city"])

    def series(self) -> pd.Series:
        return self.frame.set_index(["city", "year"])["wap"]

    def equals(self, other: "PopulationPanel") -> bool:
        return isinstance(other, PopulationPanel) and self.frame.equals(other.frame)

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()


@dataclass(frozen=True, eq=False)
class FlowMatrix:
    """Job switches between industries; ``counts[i, j]`` counts moves from i to j.

    ``by_year`` holds per-year matrices over the same registry when the source
    carried a year column; ``counts`` is then their sum.
    """

    counts: np.ndarray
    industries: tuple[str, ...]
    by_year: dict[int, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        n = len(self.industries)
        if counts.shape != (n, n): raise InvalidValue(f"flow matrix must be {n}x{n}, got {counts.shape}")
        if not np.all(np.isfinite(counts)) or (counts < 0).any(): raise InvalidValue("flow counts must be finite and non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "industries", tuple(str(code) for code in self.industries))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, industries: Iterable[str] | None = None) -> "FlowMatrix":
        key = ("industry_from", "industry_to", "year") if "year" in frame.columns else ("industry_from", "industry_to")
        frame = _canonical(frame, ("industry_from", "industry_to", "switches"), key,
                           codes=("industry_from", "industry_to"), integers=("year",), extra=("year",))
        if industries is None:
            industries = sorted(set(frame["industry_from"]) | set(frame["industry_to"]))
        industries = tuple(industries)
        position = {code: index for index, code in enumerate(industries)}

        def dense(rows: pd.DataFrame) -> np.ndarray:
            matrix = np.zeros((len(industries), len(industries)), dtype=float)
            rows = rows.loc[rows["industry_from"].isin(position) & rows["industry_to"].isin(position)]
            np.add.at(matrix, (rows["industry_from"].map(position).to_numpy(), rows["industry_to"].map(position).to_numpy()),
                      rows["switches"].to_numpy(dtype=float))
            return matrix

        by_year = {int(year): dense(rows) for year, rows in frame.groupby("year")} if "year" in frame.columns else {}
        counts = dense(frame)
        return cls(counts, industries, by_year)

    def to_frame(self) -> pd.DataFrame:
        n = len(self.industries)
        codes = np.asarray(self.industries, dtype=object)
        if self.by_year:
            parts = []
            for year in sorted(self.by_year):
                parts.append(pd.DataFrame({"industry_from": np.repeat(codes, n), "industry_to": np.tile(codes, n),
                                           "year": year, "switches": self.by_year[year].ravel()}))
            return pd.concat(parts, ignore_index=True)
        return pd.DataFrame({"industry_from": np.repeat(codes, n), "industry_to": np.tile(codes, n),
                             "switches": self.counts.ravel()})

    def aligned(self, industries: Iterable[str]) -> "FlowMatrix":
        """Reindex onto another registry; unknown industries get zero flows."""
        industries = tuple(industries)
        source = {code: index for index, code in enumerate(self.industries)}
        take = np.array([source.get(code, -1) for code in industries], dtype=int)
        known = take >= 0

        def reindex(matrix: np.ndarray) -> np.ndarray:
            result = np.zeros((len(industries), len(industries)), dtype=float)
            result[np.ix_(known, known)] = matrix[np.ix_(take[known], take[known])]
            return result

        return FlowMatrix(reindex(self.counts), industries, {year: reindex(m) for year, m in self.by_year.items()})

    def for_year(self, year: int) -> "FlowMatrix":
        if year not in self.by_year: raise InvalidValue(f"no flows recorded for year {year}")
        return FlowMatrix(self.by_year[year], self.industries)

    def pooled(self) -> "FlowMatrix":
        return FlowMatrix(self.counts, self.industries)

    def equals(self, other: "FlowMatrix") -> bool:
        return (isinstance(other, FlowMatrix) and self.industries == other.industries
                and np.array_equal(self.counts, other.counts) and self.by_year.keys() == other.by_year.keys()
                and all(np.array_equal(self.by_year[year], other.by_year[year]) for year in self.by_year))


@dataclass(frozen=True, eq=False)
class CommutingTable:
    """Commuter shares between municipalities plus origin populations."""

    frame: pd.DataFrame
    diagnostics: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("origin", "destination", "share", "origin_population")
    KEY = ("origin", "destination")

    def __post_init__(self):
        frame = _canonical(self.frame, self.COLUMNS, self.KEY, codes=("origin", "destination"))
        if ((frame["share"] < 0) | (frame["share"] > 1)).any(): raise InvalidValue("commuter shares must lie in [0, 1]")
        if (frame["origin"] == frame["destination"]).any(): raise InvalidValue("commuting origin and destination must differ")
        if (frame["origin_population"] < 0).any(): raise InvalidValue("origin population must be non-negative")
        if (frame.groupby("origin")["origin_population"].nunique() > 1).any():
            raise InvalidValue("origin population must be constant for each origin")
        object.__setattr__(self, "frame", frame)

    @property
    def municipalities(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.frame["origin"]) | set(self.frame["destination"])))

    def populations(self) -> dict[str, float]:
        """Population per municipality; destination-only municipalities get 0."""
        known = self.frame.groupby("origin")["origin_population"].first()
        return {code: float(known.get(code, 0.0)) for code in self.municipalities}

    def share_matrix(self, municipalities: tuple[str, ...] | None = None) -> np.ndarray:
        municipalities = self.municipalities if municipalities is None else municipalities
        position = {code: index for index, code in enumerate(municipalities)}
        matrix = np.zeros((len(municipalities), len(municipalities)), dtype=float)
        matrix[self.frame["origin"].map(position).to_numpy(), self.frame["destination"].map(position).to_numpy()] = \
            self.frame["share"].to_numpy(dtype=float)
        return matrix

    def equals(self, other: "CommutingTable") -> bool:
        return isinstance(other, CommutingTable) and self.frame.equals(other.frame)

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()


@dataclass(frozen=True, eq=False)
class FirmYearTable:
    """One row per firm, city and year.

    ``wage_p*`` columns are equally weighted representative wages of the firm's
    workers (for example quantile midpoints); HR covariates are optional.
    """

    frame: pd.DataFrame
    digits: int = 4
    diagnostics: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("firm", "city", "industry", "year", "employees", "avg_wage")
    KEY = ("firm", "city", "year")

    def __post_init__(self):
        extra = [name for name in self.frame.columns if str(name).startswith(WAGE_PREFIX)]
        extra += [name for name in HR_COLUMNS if name in self.frame.columns]
        frame = _canonical(self.frame, self.COLUMNS, self.KEY, codes=("firm", "city", "industry"),
                           integers=("year",), extra=extra)
        if (frame["employees"] < 1).any(): raise InvalidValue("firms must have at least one employee")
        wages = frame[["avg_wage"] + self._wage_columns(frame)].to_numpy(dtype=float)
        if (wages[np.isfinite(wages)] <= 0).any() or not np.isfinite(frame["avg_wage"]).all():
            raise NonPositiveWage("firm wages must be positive")
        object.__setattr__(self, "frame", frame)

    @staticmethod
    def _wage_columns(frame: pd.DataFrame) -> list[str]:
        return [name for name in frame.columns if name.startswith(WAGE_PREFIX)]

    @property
    def wage_columns(self) -> list[str]:
        return self._wage_columns(self.frame)

    @property
    def hr_columns(self) -> list[str]:
        return [name for name in HR_COLUMNS if name in self.frame.columns]

    def wages(self, row: int) -> np.ndarray:
        values = self.frame.loc[row, self.wage_columns].to_numpy(dtype=float)
        return values[np.isfinite(values)]

    def __len__(self) -> int:
        return len(self.frame)

    def equals(self, other: "FirmYearTable") -> bool:
        return isinstance(other, FirmYearTable) and self.frame.equals(other.frame)

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()


@dataclass(frozen=True, eq=False)
class AuxCityPanel:
    """Government expenditure per capita and optional quality indices per (city, year)."""

    frame: pd.DataFrame
    diagnostics: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("city", "year", "govexp_pc")
    KEY = ("city", "year")

    def __post_init__(self):
        frame = _canonical(self.frame, self.COLUMNS, self.KEY, codes=("city",), integers=("year",), extra=AUX_OPTIONAL)
        object.__setattr__(self, "frame", frame)

    def equals(self, other: "AuxCityPanel") -> bool:
        return isinstance(other, AuxCityPanel) and self.frame.equals(other.frame)

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()
