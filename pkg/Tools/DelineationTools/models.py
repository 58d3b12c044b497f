"""Municipality-to-city assignment produced by the metro delineation."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import pandas as pd

from Tools.errors import InvalidValue, MissingColumn


METRO = "metro"
STANDALONE = "standalone"
UNASSIGNED = "unassigned"
CROSSWALK_COLUMNS = ("municipality", "city", "kind")


@dataclass(frozen=True, eq=False)
class MetroAssignment:
    """``mapping`` sends every known municipality to its city code or ``None``.

    A city is named after its core municipality (largest population, ties by
    code). ``members`` and ``kinds`` are keyed by city code.
    """

    mapping: dict[str, str | None]
    members: dict[str, tuple[str, ...]]
    kinds: dict[str, str]
    threshold: float = 0.10
    pop_floor: float = 50_000
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for city, members in self.members.items():
            kind = self.kinds.get(city)
            if kind == METRO and len(members) < 2: raise InvalidValue(f"metro {city} has fewer than two members")
            if kind not in (METRO, STANDALONE): raise InvalidValue(f"city {city} has unknown kind {kind!r}")
            for code in members:
                if self.mapping.get(code) != city: raise InvalidValue(f"municipality {code} is listed under {city} but mapped elsewhere")

    @property
    def cities(self) -> tuple[str, ...]:
        return tuple(sorted(self.members))

    @property
    def metros(self) -> tuple[str, ...]:
        return tuple(city for city in self.cities if self.kinds[city] == METRO)

    @property
    def standalone(self) -> tuple[str, ...]:
        return tuple(city for city in self.cities if self.kinds[city] == STANDALONE)

    @property
    def merged_municipalities(self) -> frozenset[str]:
        return frozenset(code for city in self.metros for code in self.members[city])

    @property
    def unassigned(self) -> tuple[str, ...]:
        return tuple(sorted(code for code, city in self.mapping.items() if city is None))

    def kind_of(self, municipality: str) -> str:
        city = self.mapping.get(municipality)
        return UNASSIGNED if city is None else self.kinds[city]

    def to_frame(self) -> pd.DataFrame:
        codes = sorted(self.mapping)
        return pd.DataFrame({
            "municipality": codes,
            "city": [self.mapping[code] or "" for code in codes],
            "kind": [self.kind_of(code) for code in codes],
        }, columns=list(CROSSWALK_COLUMNS))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, threshold: float = 0.10, pop_floor: float = 50_000) -> "MetroAssignment":
        missing = [name for name in CROSSWALK_COLUMNS if name not in frame.columns]
        if missing: raise MissingColumn(f"crosswalk is missing required columns {missing}")
        mapping: dict[str, str | None] = {}
        members: dict[str, list[str]] = {}
        kinds: dict[str, str] = {}
        for municipality, city, kind in frame[list(CROSSWALK_COLUMNS)].astype(str).itertuples(index=False):
            if kind == UNASSIGNED or not city:
                mapping[municipality] = None
                continue
            mapping[municipality] = city
            members.setdefault(city, []).append(municipality)
            kinds[city] = kind
        return cls(mapping, {city: tuple(sorted(codes)) for city, codes in members.items()}, kinds, threshold, pop_floor)

    def equals(self, other: "MetroAssignment") -> bool:
        return (isinstance(other, MetroAssignment) and self.mapping == other.mapping
                and self.members == other.members and self.kinds == other.kinds)


def write_crosswalk(assignment: MetroAssignment, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    assignment.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def read_crosswalk(path: str | Path) -> MetroAssignment:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    return MetroAssignment.from_frame(frame)
