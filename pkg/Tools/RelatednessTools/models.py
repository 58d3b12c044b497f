"""Relatedness, density and complexity-potential containers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
import pandas as pd

from Tools.errors import InvalidValue, MissingColumn


@dataclass(frozen=True, eq=False)
class SkillProximity:
    """Observed over expected job switches; NaN marks cells with an empty margin."""

    values: np.ndarray
    industries: tuple[str, ...]
    out_flows: np.ndarray = field(default_factory=lambda: np.zeros(0))
    in_flows: np.ndarray = field(default_factory=lambda: np.zeros(0))
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = len(self.industries)
        if values.shape != (n, n): raise InvalidValue(f"skill proximity must be {n}x{n}, got {values.shape}")
        if (values[np.isfinite(values)] < 0).any(): raise InvalidValue("skill proximity must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "industries", tuple(self.industries))

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass(frozen=True, eq=False)
class RelatednessMatrix:
    """Symmetric E in [-1, 1] with a zero diagonal."""

    values: np.ndarray
    industries: tuple[str, ...]
    year: int | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = len(self.industries)
        if values.shape != (n, n): raise InvalidValue(f"relatedness must be {n}x{n}, got {values.shape}")
        if not np.all(np.isfinite(values)): raise InvalidValue("relatedness entries must be finite")
        if not np.array_equal(values, values.T): raise InvalidValue("relatedness must be symmetric")
        if (np.abs(values) > 1).any(): raise InvalidValue("relatedness entries must lie in [-1, 1]")
        if np.diag(values).any(): raise InvalidValue("relatedness diagonal must be zero")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "industries", tuple(str(code) for code in self.industries))

    def aligned(self, industries: Iterable[str]) -> "RelatednessMatrix":
        """Reindex onto another registry; unknown industries are unrelated to everything."""
        industries = tuple(industries)
        if industries == self.industries:
            return self
        source = {code: index for index, code in enumerate(self.industries)}
        take = np.array([source.get(code, -1) for code in industries], dtype=int)
        known = take >= 0
        values = np.zeros((len(industries), len(industries)))
        values[np.ix_(known, known)] = self.values[np.ix_(take[known], take[known])]
        return RelatednessMatrix(values, industries, self.year, {"unknown_industries": [code for code, ok in zip(industries, known) if not ok]})

    def to_frame(self) -> pd.DataFrame:
        codes = np.asarray(self.industries, dtype=object)
        n = len(codes)
        return pd.DataFrame({"i": np.repeat(codes, n), "j": np.tile(codes, n), "e": self.values.ravel()})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, year: int | None = None) -> "RelatednessMatrix":
        missing = [column for column in ("i", "j", "e") if column not in frame.columns]
        if missing: raise MissingColumn(f"relatedness frame is missing columns {missing}")
        frame = frame.astype({"i": str, "j": str})
        table = frame.pivot(index="i", columns="j", values="e")
        industries = tuple(sorted(set(table.index) | set(table.columns)))
        values = table.reindex(index=list(industries), columns=list(industries)).fillna(0.0).to_numpy(dtype=float)
        return cls(values, industries, year)


@dataclass(frozen=True, eq=False)
class DensityTable:
    """Density of every missing (city, industry) cell; present cells hold NaN."""

    values: np.ndarray
    missing: np.ndarray                 # True where the industry is in R_c
    cities: tuple[str, ...]
    industries: tuple[str, ...]
    year: int | None = None
    clip_negative: bool = True
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float); missing = np.asarray(self.missing, dtype=bool)
        shape = (len(self.cities), len(self.industries))
        if values.shape != shape or missing.shape != shape: raise InvalidValue("density shape does not match its registries")
        if not np.all(np.isfinite(values[missing])): raise InvalidValue("density must be finite on missing cells")
        object.__setattr__(self, "values", values); object.__setattr__(self, "missing", missing)

    def present(self, city: str) -> tuple[str, ...]:
        row = self.cities.index(city)
        return tuple(code for code, gone in zip(self.industries, self.missing[row]) if not gone)

    def absent(self, city: str) -> tuple[str, ...]:
        row = self.cities.index(city)
        return tuple(code for code, gone in zip(self.industries, self.missing[row]) if gone)

    def to_frame(self) -> pd.DataFrame:
        rows, columns = np.nonzero(self.missing)
        return pd.DataFrame({
            "city": [self.cities[index] for index in rows],
            "industry": [self.industries[index] for index in columns],
            "dens": self.values[rows, columns],
        })


@dataclass(frozen=True, eq=False)
class ComplexityPotential:
    cities: tuple[str, ...]
    values: np.ndarray
    empty: np.ndarray                   # True where the city misses no industry
    year: int | None = None
    contributions: pd.DataFrame | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.cities),): raise InvalidValue("potential does not match the city registry")
        if not np.all(np.isfinite(values)): raise InvalidValue("complexity potential must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "empty", np.asarray(self.empty, dtype=bool))

    def series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.Index(self.cities, name="city"), name="cp")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"city": list(self.cities), "year": self.year, "cp": self.values, "no_missing": self.empty})
