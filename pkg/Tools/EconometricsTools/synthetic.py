"""
Seeded synthetic datasets with planted structure.

Cities draw a working-age population log-uniformly between the configured
bounds. An industry with planted complexity q is present in city c when

    q <= 1 - nestedness * (1 - u_c)

where u_c in [0, 1] is the city's normalised log population, so large cities
host every industry and small ones only the simple ones. Present industries
get employment

    log F = alpha + beta log P + xi q + gamma log P q + noise

in the first year, with alpha set so that the median city's formal rate is
``base_rate``. In later years each city's employment is rescaled so that

    f_t = f_{t-1} + coupling (CP_{t-1} - mean CP_{t-1}) + govexp_effect dG + drift_t + e

where CP is computed from the previous year with the same functions the
pipeline uses. Job switches are Poisson with a higher rate inside each
division, which gives the relatedness matrix its block structure. A
municipality layer (satellites with large commuter shares to their city's
core plus small rural places) lets delineation recover the planted cities.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
import yaml
from scipy import stats

from Tools.ComplexityTools.complexity_core import binarize, compute_complexity, compute_rca
from Tools.ComplexityTools.models import ComplexityScores
from Tools.errors import InvalidConfig
from Tools.IngestTools.ingest_core import DEFAULT_EXCLUDED_DIVISIONS, write_dataset
from Tools.IngestTools.models import (
    AuxCityPanel,
    CommutingTable,
    EmploymentPanel,
    FirmYearTable,
    FlowMatrix,
    PopulationPanel,
)
from Tools.RelatednessTools.models import RelatednessMatrix
from Tools.RelatednessTools.relatedness_core import build_relatedness, complexity_potential, density, skill_proximity

log = logging.getLogger(__name__)

WAGE_POINTS = 10


@dataclass
class SyntheticConfig:
    seed: int = 42
    n_cities: int = 40
    n_industries: int = 60
    n_divisions: int = 8
    n_excluded_industries: int = 4
    n_years: int = 6
    first_year: int = 2010
    min_population: float = 6.0e4
    max_population: float = 8.0e6
    population_growth: float = 0.015
    nestedness: float = 0.7
    beta: float = 0.8
    gamma: float = 0.3
    xi: float = -4.0
    noise: float = 0.2
    base_rate: float = 0.3
    coupling: float = 0.2
    growth_noise: float = 0.002
    drift: float = 0.003
    govexp_effect: float = 1.0e-4
    n_firms: int = 800
    wage_sigma0: float = 0.25
    wage_sigma1: float = 0.5
    wage_ci_effect: float = 0.4
    wage_noise: float = 0.05
    flow_scale: float = 40.0
    flow_block_boost: float = 5.0
    metro_share: float = 0.6
    max_satellites: int = 3
    n_rural: int = 8
    quality_missing: float = 0.1

    def validate(self) -> None:
        problems = []
        if not 3 <= self.n_cities <= 88: problems.append("n_cities must lie in 3..88")
        if self.n_divisions < 2: problems.append("n_divisions must be at least 2")
        if self.n_industries < 2 * self.n_divisions: problems.append("n_industries must be at least twice n_divisions")
        if self.n_industries > 99 * self.n_divisions: problems.append("at most 99 industries per division")
        if not 0 <= self.n_excluded_industries <= 4 * 99: problems.append("n_excluded_industries out of range")
        if self.n_years < 1: problems.append("n_years must be at least 1")
        if not 0 < self.min_population < self.max_population: problems.append("need 0 < min_population < max_population")
        if not 0 <= self.nestedness < 1: problems.append("nestedness must lie in [0, 1)")
        if min(self.noise, self.growth_noise, self.drift, self.wage_noise, self.population_growth) < 0:
            problems.append("noise levels and growth must be non-negative")
        if not 0 < self.base_rate < 1: problems.append("base_rate must lie in (0, 1)")
        if self.n_firms < 0: problems.append("n_firms must be non-negative")
        if self.flow_scale <= 0 or self.flow_block_boost < 1: problems.append("flow_scale must be positive and flow_block_boost >= 1")
        if not 0 <= self.metro_share <= 1 or self.max_satellites < 1: problems.append("metro_share in [0, 1] and max_satellites >= 1")
        if not 0 <= self.n_rural <= 999: problems.append("n_rural must lie in 0..999")
        if not 0 <= self.quality_missing < 1: problems.append("quality_missing must lie in [0, 1)")
        if problems: raise InvalidConfig("invalid synthetic configuration: " + "; ".join(problems), problems=problems)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> "SyntheticConfig":
        data = dict(data or {})
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown: raise InvalidConfig(f"unknown synthetic keys {unknown}")
        defaults = cls()
        try:
            values = {name: type(getattr(defaults, name))(value) for name, value in data.items()}
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"synthetic configuration has a value of the wrong type: {exc}") from exc
        return cls(**values)


@dataclass
class SyntheticBundle:
    config: SyntheticConfig
    employment: EmploymentPanel
    population: PopulationPanel
    flows: FlowMatrix
    firms: FirmYearTable
    aux: AuxCityPanel
    commuting: CommutingTable
    employment_municipal: EmploymentPanel
    population_municipal: PopulationPanel
    planted_ci: ComplexityScores
    crosswalk: dict[str, str | None]
    planted: dict[str, Any] = field(default_factory=dict)

    @property
    def cities(self) -> tuple[str, ...]:
        return self.employment.cities


def _industries(config: SyntheticConfig, rng: np.random.Generator) -> tuple[list[str], np.ndarray, np.ndarray]:
    candidates = [d for d in range(15, 100) if f"{d:02d}" not in DEFAULT_EXCLUDED_DIVISIONS]
    divisions = np.sort(rng.choice(candidates, size=config.n_divisions, replace=False))
    ci = rng.permutation(np.linspace(0.0, 1.0, config.n_industries))
    chunks = np.array_split(np.argsort(ci, kind="stable"), config.n_divisions)
    order = rng.permutation(config.n_divisions)
    codes = [""] * config.n_industries
    division_of = np.zeros(config.n_industries, dtype=int)
    for chunk, slot in zip(chunks, order):
        for position, industry in enumerate(sorted(chunk)):
            codes[industry] = f"{divisions[slot]:02d}{position + 1:02d}"
            division_of[industry] = divisions[slot]
    return codes, ci, division_of


def _excluded_codes(config: SyntheticConfig) -> list[str]:
    divisions = sorted(DEFAULT_EXCLUDED_DIVISIONS)
    return [f"{divisions[k % len(divisions)]}{k // len(divisions) + 1:02d}" for k in range(config.n_excluded_industries)]


def _flows(codes: list[str], division_of: np.ndarray, config: SyntheticConfig, rng: np.random.Generator) -> FlowMatrix:
    same = division_of[:, None] == division_of[None, :]
    rate = config.flow_scale * np.where(same, config.flow_block_boost, 1.0)
    np.fill_diagonal(rate, 10.0 * config.flow_scale)
    return FlowMatrix(rng.poisson(rate).astype(float), codes)


def _rows(matrix: np.ndarray, cities: tuple[str, ...], codes: list[str], year: int) -> pd.DataFrame:
    c, i = np.nonzero(matrix > 0)
    return pd.DataFrame({
        "city": np.asarray(cities, dtype=object)[c],
        "industry": np.asarray(codes, dtype=object)[i],
        "year": year,
        "employment": matrix[c, i],
    })


def _potential(rows: pd.DataFrame, year: int, relatedness: RelatednessMatrix, cities: tuple[str, ...]) -> np.ndarray:
    panel = EmploymentPanel(rows)
    presence = binarize(compute_rca(panel, year))
    scores = compute_complexity(presence, cross_check=False)
    cp = complexity_potential(density(relatedness, presence), scores)
    return cp.series().reindex(list(cities)).fillna(0.0).to_numpy()


def generate_synthetic(config: SyntheticConfig | None = None) -> SyntheticBundle:
    """Build a deterministic bundle for ``config.seed``; every panel passes ingest validation."""
    config = config or SyntheticConfig()
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_cities
    years = [config.first_year + t for t in range(config.n_years)]
    cities = tuple(f"{11 + k:02d}001" for k in range(n))

    codes, ci, division_of = _industries(config, rng)
    excluded = _excluded_codes(config)
    log_p0 = rng.uniform(np.log(config.min_population), np.log(config.max_population), n)
    growth = rng.uniform(0.0, config.population_growth, n)
    log_wap = log_p0[:, None] + growth[:, None] * np.arange(config.n_years)[None, :]
    wap = np.exp(log_wap)
    u = (log_p0 - log_p0.min()) / (log_p0.max() - log_p0.min())
    present = ci[None, :] <= 1.0 - config.nestedness * (1.0 - u[:, None])

    flows = _flows(codes, division_of, config, rng)
    relatedness = build_relatedness(skill_proximity(flows))

    def systematic(t: int) -> np.ndarray:
        lp = log_wap[:, t][:, None]
        return config.beta * lp + config.xi * ci[None, :] + config.gamma * lp * ci[None, :]

    base = np.where(present, np.exp(systematic(0)), 0.0).sum(axis=1)
    alpha = float(np.log(config.base_rate) - np.median(np.log(base) - log_wap[:, 0]))

    govexp = np.cumsum(np.column_stack([rng.uniform(200.0, 800.0, n),
                                        rng.normal(10.0, 25.0, (n, config.n_years - 1))]), axis=1)
    drift = rng.normal(0.0, config.drift, config.n_years)

    frames = []
    employment = np.zeros((n, len(codes)))
    rates = np.zeros((n, config.n_years))
    for t, year in enumerate(years):
        shock = config.noise * rng.standard_normal((n, len(codes)))
        model = np.where(present, np.exp(alpha + systematic(t) + shock), 0.0)
        if t == 0:
            employment = model
        else:
            cp = _potential(frames[-1], years[t - 1], relatedness, cities)
            target = (rates[:, t - 1] + config.coupling * (cp - cp.mean())
                      + config.govexp_effect * (govexp[:, t] - govexp[:, t - 1])
                      + drift[t] + config.growth_noise * rng.standard_normal(n))
            target = np.maximum(target, 0.05 * rates[:, t - 1])
            employment = model * (target * wap[:, t] / model.sum(axis=1))[:, None]
        rates[:, t] = employment.sum(axis=1) / wap[:, t]
        frames.append(_rows(employment, cities, codes, year))

    extra_share = rng.uniform(0.001, 0.01, (n, len(excluded)))
    for t, year in enumerate(years):
        if excluded:
            frames.append(_rows(extra_share * wap[:, t][:, None], cities, excluded, year))
    panel = EmploymentPanel(pd.concat(frames, ignore_index=True))
    population = PopulationPanel(pd.DataFrame({
        "city": np.repeat(np.asarray(cities, dtype=object), config.n_years),
        "year": np.tile(years, n),
        "wap": wap.ravel(),
    }))

    quality = rng.normal(0.0, 1.0, (n, 2))
    inst = quality[:, [0]] + rng.normal(0.0, 0.1, (n, config.n_years))
    edu = quality[:, [1]] + rng.normal(0.0, 0.1, (n, config.n_years))
    inst[rng.random(inst.shape) < config.quality_missing] = np.nan
    edu[rng.random(edu.shape) < config.quality_missing] = np.nan
    aux = AuxCityPanel(pd.DataFrame({
        "city": np.repeat(np.asarray(cities, dtype=object), config.n_years),
        "year": np.tile(years, n),
        "govexp_pc": govexp.ravel(),
        "inst_quality": inst.ravel(),
        "edu_quality": edu.ravel(),
    }))

    firms = _firms(config, rng, cities, codes, ci, present, wap[:, 0], years)
    commuting, employment_municipal, population_municipal, crosswalk = _municipalities(
        config, rng, cities, codes, ci, panel, wap, years)

    planted_ci = ComplexityScores.from_ci(dict(zip(codes, ci)), method="planted")
    planted = {
        "alpha": alpha,
        "beta": config.beta,
        "gamma": config.gamma,
        "xi": config.xi,
        "coupling": config.coupling,
        "nestedness": config.nestedness,
        "seed": config.seed,
        "divisions": sorted({code[:2] for code in codes}),
        "excluded_industries": excluded,
    }
    log.info("synthetic bundle: %d cities, %d industries, %d years, seed %d",
             n, len(codes) + len(excluded), config.n_years, config.seed)
    return SyntheticBundle(config, panel, population, flows, firms, aux, commuting, employment_municipal,
                           population_municipal, planted_ci, crosswalk, planted)


def _firms(config: SyntheticConfig, rng: np.random.Generator, cities: tuple[str, ...], codes: list[str],
           ci: np.ndarray, present: np.ndarray, wap: np.ndarray, years: list[int]) -> FirmYearTable:
    n_firms = config.n_firms
    city_effect = rng.normal(0.0, 0.1, len(cities))
    city_index = rng.choice(len(cities), size=n_firms, p=wap / wap.sum())
    industry_index = np.array([rng.choice(np.flatnonzero(present[c])) for c in city_index], dtype=int)
    year_index = rng.integers(0, len(years), n_firms)
    employees = 1 + np.floor(np.exp(rng.normal(np.log(100.0), 0.7, n_firms)))
    q = ci[industry_index]
    log_wage = (np.log(1500.0) + config.wage_ci_effect * q + 0.05 * np.log(employees)
                + city_effect[city_index] + 0.02 * year_index + config.wage_noise * rng.standard_normal(n_firms))
    avg_wage = np.exp(log_wage)
    sigma = np.clip(config.wage_sigma0 + config.wage_sigma1 * q + config.wage_noise * rng.standard_normal(n_firms), 0.05, None)
    z = stats.norm.ppf((np.arange(WAGE_POINTS) + 0.5) / WAGE_POINTS)
    points = avg_wage[:, None] * np.exp(sigma[:, None] * z[None, :] - 0.5 * sigma[:, None] ** 2)
    frame = pd.DataFrame({
        "firm": [f"F{k:05d}" for k in range(n_firms)],
        "city": np.asarray(cities, dtype=object)[city_index],
        "industry": np.asarray(codes, dtype=object)[industry_index],
        "year": np.asarray(years)[year_index],
        "employees": employees,
        "avg_wage": avg_wage,
    })
    for k in range(WAGE_POINTS):
        frame[f"wage_p{int(100 * (k + 0.5) / WAGE_POINTS):02d}"] = points[:, k]
    frame["avg_age"] = rng.normal(38.0, 5.0, n_firms)
    frame["age_sd"] = rng.uniform(6.0, 12.0, n_firms)
    frame["retention"] = rng.uniform(0.5, 0.95, n_firms)
    frame["wage_increase_mean"] = rng.normal(0.04, 0.01, n_firms)
    frame["wage_increase_sd"] = rng.uniform(0.01, 0.05, n_firms)
    frame["women_share"] = rng.uniform(0.1, 0.7, n_firms)
    frame["gender_wage_gap"] = rng.normal(0.12, 0.05, n_firms)
    return FirmYearTable(frame)


def _municipalities(config: SyntheticConfig, rng: np.random.Generator, cities: tuple[str, ...], codes: list[str],
                    ci: np.ndarray, panel: EmploymentPanel, wap: np.ndarray, years: list[int]):
    """Split every city into a core and satellites and add rural places outside any city."""
    commuting = []
    shares: dict[str, dict[str, float]] = {}
    crosswalk: dict[str, str | None] = {}
    for k, city in enumerate(cities):
        parts = {city: 1.0}
        crosswalk[city] = city
        if rng.random() < config.metro_share:
            for s in range(int(rng.integers(1, config.max_satellites + 1))):
                satellite = f"{11 + k:02d}{s + 2:03d}"
                parts[satellite] = float(rng.uniform(0.03, 0.08))
                crosswalk[satellite] = city
                commuting.append((satellite, city, float(rng.uniform(0.15, 0.4))))
                other = cities[(k + 1 + int(rng.integers(0, len(cities) - 1))) % len(cities)]
                commuting.append((satellite, other, float(rng.uniform(0.0, 0.03))))
        parts[city] = 1.0 - sum(value for name, value in parts.items() if name != city)
        shares[city] = parts
        other = cities[(k + 1 + int(rng.integers(0, len(cities) - 1))) % len(cities)]
        commuting.append((city, other, float(rng.uniform(0.0, 0.03))))

    population_rows = []
    for k, city in enumerate(cities):
        for municipality, part in shares[city].items():
            for t, year in enumerate(years):
                population_rows.append((municipality, year, wap[k, t] * part))
    origin_population = {municipality: wap[k, 0] * part
                         for k, city in enumerate(cities) for municipality, part in shares[city].items()}

    municipal = []
    for city in cities:
        rows = panel.frame.loc[panel.frame["city"] == city]
        for municipality, part in shares[city].items():
            municipal.append(rows.assign(city=municipality, employment=rows["employment"] * part))

    simple = [codes[index] for index in np.argsort(ci, kind="stable")[:2]]
    for r in range(config.n_rural):
        rural = f"99{r + 1:03d}"
        size = float(rng.uniform(2_000.0, 30_000.0))
        crosswalk[rural] = None
        origin_population[rural] = size
        commuting.append((rural, cities[int(rng.integers(0, len(cities)))], float(rng.uniform(0.01, 0.05))))
        rate = rng.uniform(0.05, 0.15, len(simple))
        for year in years:
            population_rows.append((rural, year, size))
            municipal.append(pd.DataFrame({"city": rural, "industry": simple, "year": year, "employment": size * rate}))

    commuting_frame = pd.DataFrame(commuting, columns=["origin", "destination", "share"])
    commuting_frame["origin_population"] = commuting_frame["origin"].map(origin_population)
    population_frame = pd.DataFrame(population_rows, columns=["city", "year", "wap"])
    return (CommutingTable(commuting_frame), EmploymentPanel(pd.concat(municipal, ignore_index=True)),
            PopulationPanel(population_frame), crosswalk)


def write_bundle(bundle: SyntheticBundle, directory: str | Path) -> dict[str, Path]:
    """Write every table of the bundle as CSV plus the planted parameters as YAML."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tables = {
        "employment": bundle.employment,
        "population": bundle.population,
        "flows": bundle.flows,
        "firms": bundle.firms,
        "aux": bundle.aux,
        "commuting": bundle.commuting,
        "employment_municipal": bundle.employment_municipal,
        "population_municipal": bundle.population_municipal,
    }
    paths = {name: write_dataset(table, directory / f"{name}.csv") for name, table in tables.items()}
    paths["planted_ci"] = directory / "planted_ci.csv"
    bundle.planted_ci.to_frame().to_csv(paths["planted_ci"], index=False, lineterminator="\n")
    paths["planted"] = directory / "planted.yaml"
    with open(paths["planted"], "w", encoding="utf-8", newline="\n") as handle:
        yaml.safe_dump({"planted": bundle.planted, "config": bundle.config.to_dict()}, handle, sort_keys=True)
    return paths
