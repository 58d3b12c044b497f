"""Staged pipeline runner with a content-digest cache.

Every stage reads its inputs from files, writes its outputs under the output
directory and records ``.cache/<stage>.json`` with its key (digest of the
stage parameters and input file contents) and the digests of its outputs.
A stage is skipped when its key matches and all recorded outputs are intact.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd

from pipeline_config import PipelineConfig
from Tools.ComplexityTools import (
    ComplexityScores,
    PresenceMatrix,
    aggregate_complexity,
    binarize,
    city_complexity_summary,
    compute_complexity,
    compute_rca,
)
from Tools.DelineationTools import delineate_metros, read_crosswalk, write_crosswalk
from Tools.EconometricsTools import (
    CityYearFrame,
    build_city_year_frame,
    cp_growth_scatter,
    elasticity_regression,
    firm_regressions,
    growth_regression,
    scaling_summary,
    two_group_slopes,
)
from Tools.EconometricsTools.synthetic import generate_synthetic, write_bundle
from Tools.errors import ConfigInvalid, FormalCityError, MissingOutput, StageFailure
from Tools.IngestTools import (
    aggregate_population,
    aggregate_to_cities,
    filter_sectors,
    load_dataset,
    write_dataset,
)
from Tools.RelatednessTools import (
    RelatednessMatrix,
    build_relatedness,
    complexity_potential,
    density,
    skill_proximity,
)

log = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
STAGES = ("synthetic", "ingest", "complexity", "relatedness", "potential", "frame", "econometrics", "report")
CACHE_DIR = ".cache"

ProgressCallback = Callable[[str, str], None]


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, NaN and inf become None."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


@dataclass
class StageRecord:
    name: str
    key: str
    outputs: dict[str, str]
    summary: dict[str, Any] = field(default_factory=dict)
    status: str = "run"
    seconds: float = 0.0


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    stages: dict[str, StageRecord] = field(default_factory=dict)
    generated_at: str = ""

    def cache_hits(self) -> list[str]:
        return [name for name, record in self.stages.items() if record.status == "hit"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "stages": {name: {"key": record.key, "outputs": record.outputs} for name, record in self.stages.items()},
            "diagnostics": {name: record.summary for name, record in self.stages.items()},
            "volatile": {
                "generated_at": self.generated_at,
                "timings": {name: round(record.seconds, 4) for name, record in self.stages.items()},
                "cache": {name: record.status for name, record in self.stages.items()},
            },
        }

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


class PipelineRunner:
    def __init__(self, config: PipelineConfig, progress_callback: ProgressCallback | None = None):
        self.config = config
        self.out = config.output_dir
        self.progress_callback = progress_callback
        self.manifest = RunManifest(config.config_hash(), TOOL_VERSION)
        self.inputs: dict[str, Path | None] = {}

    # -- bookkeeping ---------------------------------------------------------------------------------

    def _report_progress(self, stage: str, status: str) -> None:
        index = STAGES.index(stage) + 1
        log.info("[%d/%d] %s: %s (%d%%)", index, len(STAGES), stage, status, int(index * 100 / len(STAGES)))
        if self.progress_callback is not None:
            self.progress_callback(stage, status)

    def _relative(self, path: Path) -> str:
        try:
            return path.resolve().relative_to(self.out.resolve()).as_posix()
        except ValueError:
            return path.name

    def _key(self, stage: str, params: dict[str, Any], inputs: list[Path]) -> str:
        payload = {
            "stage": stage,
            "tool_version": TOOL_VERSION,
            "params": _plain(params),
            "inputs": {self._relative(path): file_digest(path) for path in sorted(inputs, key=str) if path is not None},
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def _cache_path(self, stage: str) -> Path:
        return self.out / CACHE_DIR / f"{stage}.json"

    def _cached(self, stage: str, key: str) -> dict[str, Any] | None:
        path = self._cache_path(stage)
        if not path.is_file():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        if record.get("key") != key:
            return None
        for relative, digest in record.get("outputs", {}).items():
            target = self.out / relative
            if not target.is_file() or file_digest(target) != digest:
                return None
        return record

    def _stage(self, stage: str, params: dict[str, Any], inputs: list[Path],
               build: Callable[[], tuple[list[Path], dict[str, Any]]]) -> StageRecord:
        self._report_progress(stage, "started")
        started = time.perf_counter()
        key = self._key(stage, params, inputs)
        cached = self._cached(stage, key)
        if cached is not None:
            record = StageRecord(stage, key, cached["outputs"], cached.get("summary", {}), "hit")
        else:
            try:
                outputs, summary = build()
            except ConfigInvalid:
                raise
            except Exception as exc:
                raise StageFailure(stage, exc) from exc
            digests = {self._relative(path): file_digest(path) for path in sorted(outputs, key=str)}
            record = StageRecord(stage, key, digests, _plain(summary), "run")
            cache = self._cache_path(stage)
            cache.parent.mkdir(parents=True, exist_ok=True)
            cache.write_text(json.dumps({"key": key, "outputs": digests, "summary": record.summary},
                                        indent=2, sort_keys=True) + "\n", encoding="utf-8")
        record.seconds = time.perf_counter() - started
        self.manifest.stages[stage] = record
        self._report_progress(stage, "cache hit" if record.status == "hit" else "done")
        return record

    def _pool(self) -> ThreadPoolExecutor:
        return ThreadPoolExecutor(max_workers=self.config.output.threads)

    # -- stages --------------------------------------------------------------------------------------

    def run(self) -> RunManifest:
        os.environ.setdefault("OMP_NUM_THREADS", str(self.config.output.threads))
        self.out.mkdir(parents=True, exist_ok=True)
        log.info("run %s -> %s", self.manifest.config_hash[:12], self.out)
        self._resolve_inputs()
        self._ingest()
        years = self._years()
        self._complexity(years)
        self._relatedness(years)
        self._potential(years)
        self._frame(years)
        self._econometrics(years)
        self._stage("report", {}, self._report_inputs(), lambda: ([emit_report(self.out)], {}))
        self.manifest.generated_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.manifest.write(self.out / "manifest.json")
        log.info("run finished; cache hits: %s", self.manifest.cache_hits() or "none")
        return self.manifest

    def _resolve_inputs(self) -> None:
        config = self.config
        names = ("employment", "population", "flows", "firms", "aux", "commuting", "crosswalk")
        if config.synthetic is not None:
            directory = self.out / "synthetic_inputs"

            def build():
                bundle = generate_synthetic(config.synthetic)
                paths = write_bundle(bundle, directory)
                return list(paths.values()), {"cities": len(bundle.cities), "planted": bundle.planted}

            self._stage("synthetic", config.synthetic.to_dict(), [], build)
            self.inputs = {
                "employment": directory / "employment_municipal.csv",
                "population": directory / "population_municipal.csv",
                "flows": directory / "flows.csv",
                "firms": directory / "firms.csv",
                "aux": directory / "aux.csv",
                "commuting": directory / "commuting.csv",
                "crosswalk": None,
            }
        else:
            self.manifest.stages.pop("synthetic", None)
            self.inputs = {name: (config.resolve(getattr(config.inputs, name)) if getattr(config.inputs, name) else None)
                           for name in names}

    def _ingest(self) -> None:
        config = self.config
        directory = self.out / "ingest"
        strict, digits = config.ingest.strict, config.ingest.digits
        inputs = [self.inputs[name] for name in ("employment", "population", "commuting", "crosswalk") if self.inputs[name]]
        params = {"ingest": asdict(config.ingest), "delineation": asdict(config.delineation), "years": asdict(config.years)}

        def build():
            employment = load_dataset(self.inputs["employment"], "employment", strict=strict, digits=digits)
            population = load_dataset(self.inputs["population"], "population", strict=strict)
            outputs = []
            summary: dict[str, Any] = {"rows_dropped": {"employment": len(employment.diagnostics.get("dropped", [])),
                                                        "population": len(population.diagnostics.get("dropped", []))}}
            assignment = None
            if self.inputs["commuting"]:
                commuting = load_dataset(self.inputs["commuting"], "commuting", strict=strict)
                assignment = delineate_metros(commuting, config.delineation.threshold, config.delineation.pop_floor)
            elif self.inputs["crosswalk"]:
                assignment = read_crosswalk(self.inputs["crosswalk"])
            if assignment is not None:
                outputs.append(write_crosswalk(assignment, directory / "crosswalk.csv"))
                employment = aggregate_to_cities(employment, assignment, strict=strict)
                population = aggregate_population(population, assignment, strict=strict)
                summary["delineation"] = {"metros": len(assignment.metros), "standalone": len(assignment.standalone),
                                          "unassigned": len(assignment.unassigned)}
            employment = filter_sectors(employment, config.ingest.excluded_divisions)
            frame = employment.frame.loc[employment.frame["year"].map(config.years.contains)]
            if frame.empty: raise ConfigInvalid("no employment rows fall inside the configured years", key="years")
            employment = employment.replace(frame, **employment.diagnostics)
            population = type(population)(population.frame.loc[population.frame["year"].map(config.years.contains)])
            outputs.append(write_dataset(employment, directory / "employment.csv"))
            outputs.append(write_dataset(population, directory / "population.csv"))
            summary.update({"cities": len(employment.cities), "industries": len(employment.industries),
                            "years": list(employment.years),
                            "removed_employment": employment.diagnostics.get("removed_employment", 0.0)})
            return outputs, summary

        self._stage("ingest", params, inputs, build)

    def _panel(self):
        return load_dataset(self.out / "ingest" / "employment.csv", "employment", digits=self.config.ingest.digits)

    def _population(self):
        return load_dataset(self.out / "ingest" / "population.csv", "population")

    def _years(self) -> list[int]:
        return list(self._panel().years)

    def _complexity(self, years: list[int]) -> None:
        config = self.config.complexity

        def one_year(panel, year: int) -> tuple[list[Path], dict[str, Any]]:
            directory = self.out / "complexity" / str(year)
            rca = compute_rca(panel, year)
            presence = binarize(rca, config.cutoff)
            scores = compute_complexity(presence, config.method, config.iterations, config.tolerance,
                                        cross_check=config.cross_check)
            summary = city_complexity_summary(presence, scores).merge(scores.city_frame(), on="city", how="left")
            outputs = [
                _write_csv(rca.to_frame(), directory / "rca.csv"),
                _write_csv(presence.to_frame(), directory / "presence.csv"),
                _write_csv(scores.to_frame(), directory / "complexity.csv"),
                _write_csv(summary, directory / "city_summary.csv"),
            ]
            info = {key: scores.diagnostics.get(key) for key in ("method", "fallback", "rank_correlation", "eigenvalue")}
            info["pruned_industries"] = len(scores.diagnostics.get("pruned_industries", []))
            return outputs, info

        def build():
            panel = self._panel()
            with self._pool() as pool:
                results = list(pool.map(lambda year: one_year(panel, year), years))
            outputs = [path for paths, _ in results for path in paths]
            return outputs, {str(year): info for year, (_, info) in zip(years, results)}

        self._stage("complexity", asdict(config), [self.out / "ingest" / "employment.csv"], build)

    def _relatedness_path(self, year: int | None) -> Path:
        name = "relatedness.csv" if year is None else f"relatedness_{year}.csv"
        return self.out / "relatedness" / name

    def _per_year_flows(self) -> bool:
        return not self.config.relatedness.pooled

    def _relatedness(self, years: list[int]) -> None:
        config = self.config.relatedness

        def build():
            flows = load_dataset(self.inputs["flows"], "flows", strict=self.config.ingest.strict, digits=self.config.ingest.digits)
            sp = skill_proximity(flows.pooled(), include_diagonal=config.include_diagonal)
            matrix = build_relatedness(sp)
            outputs = [_write_csv(matrix.to_frame(), self._relatedness_path(None))]
            summary = {"undefined_cells": matrix.diagnostics["undefined_cells"],
                       "isolated_industries": matrix.diagnostics["isolated_industries"], "per_year": []}
            if self._per_year_flows():
                for year in years:
                    if year not in flows.by_year:
                        log.warning("no flows recorded for %d; the pooled relatedness is used", year)
                        continue
                    yearly = build_relatedness(skill_proximity(flows.for_year(year), include_diagonal=config.include_diagonal), year)
                    outputs.append(_write_csv(yearly.to_frame(), self._relatedness_path(year)))
                    summary["per_year"].append(year)
            return outputs, summary

        params = {"include_diagonal": config.include_diagonal, "pooled": config.pooled, "years": years}
        self._stage("relatedness", params, [self.inputs["flows"]], build)

    def _relatedness_for(self, year: int) -> RelatednessMatrix:
        path = self._relatedness_path(year)
        if not (self._per_year_flows() and path.is_file()):
            path = self._relatedness_path(None)
        return RelatednessMatrix.from_frame(pd.read_csv(path, dtype={"i": str, "j": str}), year)

    def _presence(self, year: int) -> PresenceMatrix:
        frame = pd.read_csv(self.out / "complexity" / str(year) / "presence.csv", dtype={"city": str, "industry": str})
        return PresenceMatrix.from_frame(frame, year)

    def _scores(self, year: int) -> ComplexityScores:
        frame = pd.read_csv(self.out / "complexity" / str(year) / "complexity.csv", dtype={"industry": str})
        return ComplexityScores.from_frame(frame, year)

    def _complexity_outputs(self, years: list[int]) -> list[Path]:
        return [self.out / "complexity" / str(year) / name for year in years for name in ("presence.csv", "complexity.csv")]

    def _relatedness_outputs(self) -> list[Path]:
        return sorted((self.out / "relatedness").glob("relatedness*.csv"))

    def _potential(self, years: list[int]) -> None:
        config = self.config.relatedness

        def one_year(year: int):
            presence = self._presence(year)
            table = density(self._relatedness_for(year), presence, config.clip_negative)
            cp = complexity_potential(table, self._scores(year), contributions=config.contributions)
            path = _write_csv(table.to_frame(), self.out / "potential" / str(year) / "density.csv")
            return path, cp

        def build():
            with self._pool() as pool:
                results = list(pool.map(one_year, years))
            outputs = [path for path, _ in results]
            potential = pd.concat([cp.to_frame() for _, cp in results], ignore_index=True)
            outputs.append(_write_csv(potential, self.out / "potential" / "potential.csv"))
            if config.contributions:
                breakdown = pd.concat([cp.contributions for _, cp in results], ignore_index=True)
                outputs.append(_write_csv(breakdown, self.out / "potential" / "potential_contributions.csv"))
            return outputs, {"cities_without_missing": sum(int(cp.empty.sum()) for _, cp in results)}

        params = {"clip_negative": config.clip_negative, "contributions": config.contributions}
        self._stage("potential", params, self._complexity_outputs(years) + self._relatedness_outputs(), build)

    def _frame(self, years: list[int]) -> None:
        inputs = [self.out / "ingest" / "employment.csv", self.out / "ingest" / "population.csv",
                  self.out / "potential" / "potential.csv"] + ([self.inputs["aux"]] if self.inputs["aux"] else [])

        def build():
            aux = load_dataset(self.inputs["aux"], "aux", strict=self.config.ingest.strict) if self.inputs["aux"] else None
            potential = pd.read_csv(self.out / "potential" / "potential.csv", dtype={"city": str})
            frame = build_city_year_frame(self._panel(), self._population(), potential, aux)
            return [_write_csv(frame.to_frame(), self.out / "frame" / "city_year.csv")], frame.diagnostics

        self._stage("frame", {}, inputs, build)

    def _econometrics(self, years: list[int]) -> None:
        config = self.config.econometrics
        tables = self.out / "tables"; plots = self.out / "plots"
        inputs = [self.out / "ingest" / "employment.csv", self.out / "ingest" / "population.csv",
                  self.out / "potential" / "potential.csv", self.out / "frame" / "city_year.csv"]
        inputs += self._complexity_outputs(years) + ([self.inputs["firms"]] if self.inputs["firms"] else [])

        def build():
            panel, population = self._panel(), self._population()
            frame = CityYearFrame.from_frame(pd.read_csv(self.out / "frame" / "city_year.csv", dtype={"city": str}))
            potential = pd.read_csv(self.out / "potential" / "potential.csv", dtype={"city": str})
            scores = {year: self._scores(year) for year in years}
            focus = config.scaling_year if config.scaling_year in years else years[-1]
            outputs: list[Path] = []
            results = []
            if len(frame):
                with self._pool() as pool:
                    fits = list(pool.map(lambda spec: growth_regression(frame, spec, city_fe=config.city_fe,
                                                                        se_mode=config.se_mode), config.specs))
                for fit in fits:
                    outputs.append(_write_csv(fit.to_table(), tables / f"{fit.name}.csv"))
                    results.append(fit)
            else:
                log.warning("city-year frame is empty; growth regressions are skipped")

            curve = elasticity_regression(panel, population, scores, year_fe=True, grid=config.elasticity_grid,
                                          se_mode=config.se_mode)
            outputs.append(_write_csv(curve.result.to_table(), tables / "elasticity.csv"))
            outputs.append(_write_csv(curve.to_frame(), plots / "elasticity_curve.csv"))
            results.append(curve.result)
            slopes = two_group_slopes(panel, population, scores, config.two_group_share, se_mode=config.se_mode)
            outputs.append(_write_csv(slopes.to_frame(), plots / "two_group_slopes_plot.csv"))

            if self.inputs["firms"]:
                firms = load_dataset(self.inputs["firms"], "firms", strict=self.config.ingest.strict,
                                     digits=self.config.ingest.digits)
                for spec in ("entropy", "wage"):
                    fit = firm_regressions(firms, scores[focus], spec, min_employees=config.min_employees,
                                           hr_controls=config.hr_controls, se_mode=config.se_mode)
                    outputs.append(_write_csv(fit.to_table(), tables / f"firm_{spec}.csv"))
                    results.append(fit)

            scaling = scaling_summary(panel, population, scores[focus], self._presence(focus), focus)
            outputs.append(_write_csv(scaling.cities, plots / "city_scaling.csv"))
            outputs.append(_write_csv(scaling.correlation_frame(), plots / "scaling_correlations.csv"))
            outputs.append(_write_csv(scaling.layers, plots / "decile_layers.csv"))
            if len(years) >= 2:
                scatter, slope = cp_growth_scatter(panel, population, potential)
                outputs.append(_write_csv(scatter, plots / "potential_growth.csv"))
                results.append(slope)
            divisions = aggregate_complexity(scores[focus], panel, self.config.complexity.aggregate_level, focus)
            outputs.append(_write_csv(divisions.rename(columns={"group": "division"}), plots / "division_complexity.csv"))

            diagnostics = pd.DataFrame([fit.summary_row() for fit in results])
            outputs.append(_write_csv(diagnostics, tables / "diagnostics.csv"))
            summary = {
                "scaling_year": focus,
                "correlations": scaling.correlations,
                "elasticity": {"beta": curve.beta, "gamma": curve.gamma},
                "two_group_gap": slopes.gap,
                "vif_flags": [fit.name for fit in results if fit.vif_flag],
            }
            return outputs, summary

        params = {"econometrics": asdict(self.config.econometrics), "aggregate_level": self.config.complexity.aggregate_level}
        self._stage("econometrics", params, inputs, build)

    def _report_inputs(self) -> list[Path]:
        return sorted(path for folder in ("ingest", "tables", "plots") for path in (self.out / folder).glob("*.csv"))


def run_pipeline(config: PipelineConfig, progress_callback: ProgressCallback | None = None) -> RunManifest:
    """Execute every stage in dependency order; the manifest is written last."""
    return PipelineRunner(config, progress_callback).run()


def _coefficient_line(table: pd.DataFrame, term: str) -> str | None:
    rows = table.loc[table["term"] == term]
    if rows.empty:
        return None
    row = rows.iloc[0]
    stars = row["stars"] if isinstance(row["stars"], str) else ""
    return f"{term} = {row['coef']:+.4f} (se {row['se']:.4f}){stars}"


def emit_report(output_dir: str | Path) -> Path:
    """Write report.txt summarising an output tree; the text depends only on the CSVs."""
    out = Path(output_dir)
    employment_path = out / "ingest" / "employment.csv"
    if not employment_path.is_file(): raise MissingOutput(f"{employment_path} is missing; run the pipeline first", path=str(employment_path))
    employment = pd.read_csv(employment_path, dtype={"city": str, "industry": str})
    years = sorted(employment["year"].unique())
    lines = [
        "FormalCity report",
        "=================",
        f"cities: {employment['city'].nunique()}",
        f"industries: {employment['industry'].nunique()}",
        f"years: {years[0]}-{years[-1]} ({len(years)})" if years else "years: none",
        "",
    ]
    correlations = out / "plots" / "scaling_correlations.csv"
    if correlations.is_file():
        lines.append("City size (log working-age population) correlations:")
        for _, row in pd.read_csv(correlations).iterrows():
            value = "undefined" if pd.isna(row["correlation"]) else f"{row['correlation']:.3f}"
            lines.append(f"  {row['measure']}: {value}")
        lines.append("")

    tables = out / "tables"
    for name, terms in (("table5_col3", ("cp_lag", "f_lag", "bartik", "d_govexp")), ("table5_col2", ("cp_lag", "f_lag")),
                        ("elasticity", ("log_p", "log_p:ci")), ("firm_entropy", ("ci",)), ("firm_wage", ("ci",))):
        path = tables / f"{name}.csv"
        if not path.is_file():
            continue
        table = pd.read_csv(path)
        entries = [line for line in (_coefficient_line(table, term) for term in terms) if line]
        lines.append(f"{name}:")
        lines.extend(f"  {entry}" for entry in entries)
        if name.startswith("table5") and "cp_lag" in set(table["term"]):
            row = table.loc[table["term"] == "cp_lag"].iloc[0]
            sign = "positive" if row["coef"] > 0 else "negative"
            significant = isinstance(row["stars"], str) and "**" in row["stars"]
            lines.append(f"  complexity potential: {sign}, {'significant' if significant else 'not significant'} at 5%")
        lines.append(f"  -> {path.relative_to(out).as_posix()}")
        lines.append("")

    diagnostics = tables / "diagnostics.csv"
    if diagnostics.is_file():
        flagged = pd.read_csv(diagnostics)
        flagged = flagged.loc[flagged["vif_flag"].astype(bool), "model"].tolist()
        lines.append(f"models with max VIF above 10: {', '.join(flagged) if flagged else 'none'}")
        lines.append(f"  -> {diagnostics.relative_to(out).as_posix()}")
        lines.append("")

    plots = sorted(path.relative_to(out).as_posix() for path in (out / "plots").glob("*.csv")) if (out / "plots").is_dir() else []
    if plots:
        lines.append("plot data:")
        lines.extend(f"  {path}" for path in plots)
    path = out / "report.txt"
    path.write_text("\n".join(lines).rstrip("\n") + "\n", encoding="utf-8")
    return path
