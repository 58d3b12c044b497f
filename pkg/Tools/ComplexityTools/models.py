"""Matrices and scores produced by the complexity stage."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd

from Tools.errors import InvalidValue, MissingColumn


def _long_frame(values: np.ndarray, cities: tuple[str, ...], industries: tuple[str, ...], name: str) -> pd.DataFrame:
    return pd.DataFrame({
        "city": np.repeat(np.asarray(cities, dtype=object), len(industries)),
        "industry": np.tile(np.asarray(industries, dtype=object), len(cities)),
        name: values.ravel(),
    })


def _wide(frame: pd.DataFrame, name: str) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    missing = [column for column in ("city", "industry", name) if column not in frame.columns]
    if missing: raise MissingColumn(f"matrix frame is missing columns {missing}")
    frame = frame.astype({"city": str, "industry": str})
    table = frame.pivot(index="city", columns="industry", values=name).sort_index().sort_index(axis=1)
    return table.fillna(0).to_numpy(), tuple(table.index), tuple(table.columns)


@dataclass(frozen=True, eq=False)
class RcaMatrix:
    values: np.ndarray                  # city x industry, 0 where employment is 0
    cities: tuple[str, ...]
    industries: tuple[str, ...]
    year: int
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.cities), len(self.industries)): raise InvalidValue("RCA shape does not match its registries")
        if not np.all(np.isfinite(values)) or (values < 0).any(): raise InvalidValue("RCA must be finite and non-negative")
        object.__setattr__(self, "values", values)

    def to_frame(self) -> pd.DataFrame:
        return _long_frame(self.values, self.cities, self.industries, "rca")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, year: int) -> "RcaMatrix":
        values, cities, industries = _wide(frame, "rca")
        return cls(values.astype(float), cities, industries, int(year))


@dataclass(frozen=True, eq=False)
class PresenceMatrix:
    values: np.ndarray                  # city x industry in {0, 1}
    cities: tuple[str, ...]
    industries: tuple[str, ...]
    year: int | None = None
    cutoff: float = 1.0
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (len(self.cities), len(self.industries)): raise InvalidValue("presence shape does not match its registries")
        if not np.isin(values, (0, 1)).all(): raise InvalidValue("presence entries must be 0 or 1")
        object.__setattr__(self, "values", values.astype(np.int8))
        object.__setattr__(self, "cities", tuple(self.cities))
        object.__setattr__(self, "industries", tuple(self.industries))

    @property
    def diversity(self) -> np.ndarray:
        return self.values.sum(axis=1).astype(int)

    @property
    def ubiquity(self) -> np.ndarray:
        return self.values.sum(axis=0).astype(int)

    def to_frame(self) -> pd.DataFrame:
        return _long_frame(self.values, self.cities, self.industries, "m")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, year: int | None = None) -> "PresenceMatrix":
        values, cities, industries = _wide(frame, "m")
        return cls(values.astype(np.int8), cities, industries, year)

    def take(self, rows: np.ndarray, columns: np.ndarray) -> "PresenceMatrix":
        """Sub-matrix (or permutation) by positional row and column indices."""
        return PresenceMatrix(self.values[np.ix_(rows, columns)], tuple(self.cities[index] for index in rows),
                              tuple(self.industries[index] for index in columns), self.year, self.cutoff)


@dataclass(frozen=True, eq=False)
class ComplexityScores:
    """Industry and city complexity for one presence matrix.

    ``raw`` is standardised (mean 0, SD 1); ``ci`` is its min-max rescaling
    to [0, 1]. ``diagnostics`` records pruned entities, the method actually
    used and the rank correlation with the other method.
    """

    industries: tuple[str, ...]
    raw: np.ndarray
    ci: np.ndarray
    cities: tuple[str, ...] = ()
    city_raw: np.ndarray = field(default_factory=lambda: np.zeros(0))
    method: str = "eigenvector"
    year: int | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=float); ci = np.asarray(self.ci, dtype=float)
        if raw.shape != (len(self.industries),) or ci.shape != raw.shape: raise InvalidValue("scores do not match the industry registry")
        if ((ci < 0) | (ci > 1)).any(): raise InvalidValue("CI must lie in [0, 1]")
        object.__setattr__(self, "industries", tuple(self.industries))
        object.__setattr__(self, "raw", raw); object.__setattr__(self, "ci", ci)
        object.__setattr__(self, "city_raw", np.asarray(self.city_raw, dtype=float))

    def series(self) -> pd.Series:
        return pd.Series(self.ci, index=pd.Index(self.industries, name="industry"), name="ci")

    def lookup(self, industries: Iterable[str], default: float = np.nan) -> np.ndarray:
        position = {code: index for index, code in enumerate(self.industries)}
        return np.array([self.ci[position[code]] if code in position else default for code in industries], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"industry": list(self.industries), "raw": self.raw, "ci": self.ci})

    def city_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"city": list(self.cities), "complexity": self.city_raw})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, year: int | None = None) -> "ComplexityScores":
        missing = [column for column in ("industry", "raw", "ci") if column not in frame.columns]
        if missing: raise MissingColumn(f"complexity frame is missing columns {missing}")
        frame = frame.astype({"industry": str}).sort_values("industry", kind="mergesort")
        return cls(tuple(frame["industry"]), frame["raw"].to_numpy(float), frame["ci"].to_numpy(float), year=year)

    @classmethod
    def from_ci(cls, ci: Mapping[str, float], year: int | None = None, method: str = "given") -> "ComplexityScores":
        """Wrap externally supplied CI values (for example planted ones)."""
        industries = tuple(sorted(ci))
        values = np.array([float(ci[code]) for code in industries])
        spread = values.std()
        raw = (values - values.mean()) / spread if spread > 0 else np.zeros_like(values)
        return cls(industries, raw, values, method=method, year=year)
