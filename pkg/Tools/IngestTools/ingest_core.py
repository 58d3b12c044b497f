"""CSV loading, validation, sector filtering and municipality aggregation."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import numpy as np
import pandas as pd

from Tools.errors import (
    DataValidationError,
    DuplicateKey,
    InvalidCode,
    InvalidValue,
    MissingColumn,
    NegativeEmployment,
    NonNumericValue,
    NonPositiveWage,
    UnmappedMunicipality,
)
from .models import (
    AUX_OPTIONAL,
    HR_COLUMNS,
    WAGE_PREFIX,
    AuxCityPanel,
    CommutingTable,
    EmploymentPanel,
    FirmYearTable,
    FlowMatrix,
    PopulationPanel,
    industry_code_ok,
)

log = logging.getLogger(__name__)

# Oil, mining, public administration and domestic service (ISIC rev. 3 divisions).
DEFAULT_EXCLUDED_DIVISIONS = frozenset({"10", "11", "75", "95"})


@dataclass(frozen=True)
class DatasetSchema:
    kind: str
    required: tuple[str, ...]
    key: tuple[str, ...]
    codes: tuple[str, ...] = ()
    industry_codes: tuple[str, ...] = ()
    integers: tuple[str, ...] = ()
    optional: tuple[str, ...] = ()
    optional_prefix: str = ""

    @property
    def numerics(self) -> tuple[str, ...]:
        return tuple(name for name in self.required if name not in self.codes and name not in self.integers)

    def optional_columns(self, header: Iterable[str]) -> list[str]:
        names = [name for name in self.optional if name in header]
        if self.optional_prefix:
            names += [name for name in header if name.startswith(self.optional_prefix)]
        return names


SCHEMAS: dict[str, DatasetSchema] = {
    "employment": DatasetSchema("employment", ("city", "industry", "year", "employment"), ("city", "industry", "year"),
                                codes=("city", "industry"), industry_codes=("industry",), integers=("year",)),
    "population": DatasetSchema("population", ("city", "year", "wap"), ("city", "year"),
                                codes=("city",), integers=("year",)),
    "flows": DatasetSchema("flows", ("industry_from", "industry_to", "switches"), ("industry_from", "industry_to", "year"),
                           codes=("industry_from", "industry_to"), industry_codes=("industry_from", "industry_to"),
                           integers=("year",), optional=("year",)),
    "commuting": DatasetSchema("commuting", ("origin", "destination", "share", "origin_population"), ("origin", "destination"),
                               codes=("origin", "destination")),
    "firms": DatasetSchema("firms", ("firm", "city", "industry", "year", "employees", "avg_wage"), ("firm", "city", "year"),
                           codes=("firm", "city", "industry"), industry_codes=("industry",), integers=("year",),
                           optional=HR_COLUMNS, optional_prefix=WAGE_PREFIX),
    "aux": DatasetSchema("aux", ("city", "year", "govexp_pc"), ("city", "year"),
                         codes=("city",), integers=("year",), optional=AUX_OPTIONAL),
}


@dataclass
class _Problem:
    line: int
    error: type[DataValidationError]
    message: str


def read_csv_text(path: str | Path) -> pd.DataFrame:
    """Read a CSV keeping every cell as text; header names are normalised."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    frame.columns = [str(name).strip().lstrip("\ufeff").lower() for name in frame.columns]
    return frame.apply(lambda column: column.str.strip())


def _parse_numbers(text: pd.Series) -> tuple[np.ndarray, np.ndarray]:
    values = pd.to_numeric(text.where(text != ""), errors="coerce").to_numpy(dtype=float)
    bad = (text != "").to_numpy() & ~np.isfinite(values)
    return values, bad


def _kind_rules(kind: str, typed: pd.DataFrame) -> list[tuple[np.ndarray, type[DataValidationError], Callable[[int], str]]]:
    if kind == "employment":
        return [(typed["employment"].to_numpy() < 0, NegativeEmployment,
                 lambda r: f"negative employment {typed['employment'].iat[r]}")]
    if kind == "population":
        return [(typed["wap"].to_numpy() <= 0, InvalidValue, lambda r: f"working-age population must be positive, got {typed['wap'].iat[r]}")]
    if kind == "flows":
        return [(typed["switches"].to_numpy() < 0, InvalidValue, lambda r: f"negative switch count {typed['switches'].iat[r]}")]
    if kind == "commuting":
        share = typed["share"].to_numpy()
        return [((share < 0) | (share > 1), InvalidValue, lambda r: f"commuter share {share[r]} outside [0, 1]"),
                ((typed["origin"] == typed["destination"]).to_numpy(), InvalidValue, lambda r: "origin equals destination"),
                (typed["origin_population"].to_numpy() < 0, InvalidValue, lambda r: "negative origin population")]
    if kind == "firms":
        wage_columns = [name for name in typed.columns if name.startswith(WAGE_PREFIX)] + ["avg_wage"]
        wages = typed[wage_columns].to_numpy(dtype=float)
        nonpositive = np.any(np.isfinite(wages) & (wages <= 0), axis=1) | ~np.isfinite(typed["avg_wage"].to_numpy())
        return [(typed["employees"].to_numpy() < 1, InvalidValue, lambda r: f"employee count {typed['employees'].iat[r]} below 1"),
                (nonpositive, NonPositiveWage, lambda r: "wages must be positive")]
    return []


def _problems(raw: pd.DataFrame, schema: DatasetSchema, digits: int) -> tuple[pd.DataFrame, list[_Problem]]:
    """Type the text frame and list every row-level violation."""
    lines = np.arange(len(raw)) + 2
    problems: list[_Problem] = []
    typed = pd.DataFrame(index=raw.index)
    present_optional = schema.optional_columns(raw.columns)
    for name in list(schema.required) + present_optional:
        text = raw[name]
        if name in schema.codes:
            typed[name] = text
            for row in np.flatnonzero((text == "").to_numpy()):
                problems.append(_Problem(int(lines[row]), InvalidCode, f"empty {name} code"))
            if name in schema.industry_codes:
                bad = ~text.map(lambda code: industry_code_ok(code, digits)).astype(bool).to_numpy() & (text != "").to_numpy()
                for row in np.flatnonzero(bad):
                    problems.append(_Problem(int(lines[row]), InvalidCode, f"{name} {text.iat[row]!r} is not a {digits}-digit code"))
            continue
        values, bad = _parse_numbers(text)
        if name in schema.required or name in schema.integers:
            bad = bad | (text == "").to_numpy()
        if name in schema.integers:
            bad = bad | (np.isfinite(values) & (values != np.round(values)))
        for row in np.flatnonzero(bad):
            problems.append(_Problem(int(lines[row]), NonNumericValue, f"{name} value {text.iat[row]!r} is not numeric"))
        typed[name] = values
    flagged = {problem.line for problem in problems}
    ok = np.array([line not in flagged for line in lines], dtype=bool)
    rules = _kind_rules(schema.kind, typed.fillna({name: 0.0 for name in schema.numerics}))
    for mask, error, message in rules:
        for row in np.flatnonzero(mask & ok):
            problems.append(_Problem(int(lines[row]), error, message(row)))
    flagged = {problem.line for problem in problems}
    ok = np.array([line not in flagged for line in lines], dtype=bool)
    key = [name for name in schema.key if name in typed.columns]
    seen: dict[tuple, int] = {}
    for row in np.flatnonzero(ok):
        value = tuple(typed[name].iat[row] for name in key)
        if value in seen:
            problems.append(_Problem(int(lines[row]), DuplicateKey, f"duplicate key {value} (first seen on line {seen[value]})"))
        else:
            seen[value] = int(lines[row])
    problems.sort(key=lambda problem: problem.line)
    return typed, problems


def _zero_total_problems(typed: pd.DataFrame, lines: np.ndarray) -> list[_Problem]:
    totals = typed.groupby(["city", "year"])["employment"].transform("sum").to_numpy()
    return [_Problem(int(lines[row]), InvalidValue,
                     f"city {typed['city'].iat[row]} has zero total employment in {int(typed['year'].iat[row])}")
            for row in np.flatnonzero(totals <= 0)]


def load_dataset(path: str | Path, schema: str, *, strict: bool = True, digits: int = 4):
    """Load one CSV into its validated panel.

    Strict mode raises the first violation (by line); permissive mode drops
    every offending row, logs it and records it in ``diagnostics["dropped"]``.
    """
    if schema not in SCHEMAS: raise ValueError(f"unknown dataset kind {schema!r}; expected one of {sorted(SCHEMAS)}")
    spec = SCHEMAS[schema]
    path = Path(path)
    if not path.is_file(): raise FileNotFoundError(f"{path} does not exist")
    raw = read_csv_text(path)
    missing = [name for name in spec.required if name not in raw.columns]
    if missing:
        raise MissingColumn(f"missing required columns {missing}. Found columns: {list(raw.columns)}", line=1, path=str(path))
    typed, problems = _problems(raw, spec, digits)
    lines = np.arange(len(raw)) + 2
    if schema == "employment":
        flagged = {problem.line for problem in problems}
        clean = np.array([line not in flagged for line in lines], dtype=bool)
        problems += _zero_total_problems(typed.loc[clean], lines[clean])
        problems.sort(key=lambda problem: problem.line)
    if problems and strict:
        first = problems[0]
        raise first.error(first.message, line=first.line, path=str(path))
    dropped_lines = {problem.line for problem in problems}
    for problem in problems:
        log.warning("%s line %d dropped (%s): %s", path.name, problem.line, problem.error.__name__, problem.message)
    keep = np.array([line not in dropped_lines for line in lines], dtype=bool)
    typed = typed.loc[keep].reset_index(drop=True)
    diagnostics: dict[str, Any] = {
        "path": str(path),
        "rows_read": int(len(raw)),
        "rows_kept": int(len(typed)),
        "dropped": [{"line": p.line, "error": p.error.__name__, "message": p.message} for p in problems],
    }
    log.info("loaded %s: %d rows (%d dropped)", path.name, len(typed), len(raw) - len(typed))
    return _build(schema, typed, digits, diagnostics)


def _build(schema: str, typed: pd.DataFrame, digits: int, diagnostics: dict[str, Any]):
    if schema == "employment":
        return EmploymentPanel(typed, digits=digits, diagnostics=diagnostics)
    if schema == "population":
        return PopulationPanel(typed, diagnostics=diagnostics)
    if schema == "flows":
        flows = FlowMatrix.from_frame(typed)
        return FlowMatrix(flows.counts, flows.industries, flows.by_year, diagnostics)
    if schema == "commuting":
        return CommutingTable(typed, diagnostics=diagnostics)
    if schema == "firms":
        return FirmYearTable(typed, digits=digits, diagnostics=diagnostics)
    return AuxCityPanel(typed, diagnostics=diagnostics)


def write_dataset(panel, path: str | Path) -> Path:
    """Write a panel in its CSV schema; floats keep full precision so a reload is identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    panel.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def filter_sectors(panel: EmploymentPanel, excluded: Iterable[str] = DEFAULT_EXCLUDED_DIVISIONS) -> EmploymentPanel:
    """Drop every record whose 2-digit division is excluded."""
    excluded = {str(code) for code in excluded}
    invalid = sorted(code for code in excluded if not re.fullmatch(r"\d{2}", code))
    if invalid: raise InvalidCode(f"excluded codes must be 2-digit divisions, got {invalid}")
    frame = panel.frame
    drop = frame["industry"].str[:2].isin(excluded)
    kept = frame.loc[~drop]
    if kept.empty:
        log.warning("sector filter removed every record (%d rows)", len(frame))
    removed = float(frame.loc[drop, "employment"].sum())
    log.info("sector filter removed %d rows, %.1f workers", int(drop.sum()), removed)
    return panel.replace(kept, removed_rows=int(drop.sum()), removed_employment=removed, excluded=sorted(excluded))


def _mapping_of(crosswalk) -> Mapping[str, str | None]:
    return crosswalk.mapping if hasattr(crosswalk, "mapping") else crosswalk


def _map_codes(codes: pd.Series, crosswalk, strict: bool) -> tuple[pd.Series, list[str], list[str]]:
    mapping = _mapping_of(crosswalk)
    unknown = sorted(set(codes) - set(mapping))
    if unknown and strict:
        raise UnmappedMunicipality(f"{len(unknown)} municipalities are missing from the crosswalk, e.g. {unknown[:5]}")
    if unknown:
        log.warning("%d municipalities missing from the crosswalk are dropped", len(unknown))
    cities = codes.map(lambda code: mapping.get(code) or None)
    dropped = sorted(set(codes[cities.isna()]) - set(unknown))
    return cities, unknown, dropped


def aggregate_to_cities(panel: EmploymentPanel, crosswalk, *, strict: bool = True) -> EmploymentPanel:
    """Sum municipal employment within (city, industry, year).

    ``crosswalk`` is a municipality -> city mapping (or an object with a
    ``mapping`` attribute); municipalities mapped to ``None`` are the
    documented drop list.
    """
    cities, unknown, dropped = _map_codes(panel.frame["city"], crosswalk, strict)
    frame = panel.frame.assign(city=cities).dropna(subset=["city"])
    grouped = frame.groupby(["city", "industry", "year"], sort=True, as_index=False)["employment"].sum()
    removed = float(panel.frame.loc[cities.isna(), "employment"].sum())
    log.info("aggregated %d municipalities into %d cities; %.1f workers outside any city",
             panel.frame["city"].nunique(), grouped["city"].nunique(), removed)
    return panel.replace(grouped, dropped_municipalities=dropped, unmapped_municipalities=unknown,
                         removed_employment=removed)


def aggregate_population(population: PopulationPanel, crosswalk, *, strict: bool = True) -> PopulationPanel:
    """Sum municipal working-age population within (city, year)."""
    cities, unknown, dropped = _map_codes(population.frame["city"], crosswalk, strict)
    frame = population.frame.assign(city=cities).dropna(subset=["city"])
    grouped = frame.groupby(["city", "year"], sort=True, as_index=False)["wap"].sum()
    return PopulationPanel(grouped, diagnostics={"dropped_municipalities": dropped, "unmapped_municipalities": unknown})
