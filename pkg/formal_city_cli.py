"""Command-line surface: one subcommand per analysis plus ``run`` and ``report``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Sequence

import pandas as pd

from pipeline_config import ENV_OUTPUT_DIR, ENV_THREADS, load_config
from pipeline_runner import emit_report, run_pipeline
from Tools.ComplexityTools import (
    aggregate_complexity,
    binarize,
    city_complexity_summary,
    compute_complexity,
    compute_rca,
)
from Tools.DelineationTools import DEFAULT_POP_FLOOR, DEFAULT_THRESHOLD, delineate_metros, write_crosswalk
from Tools.EconometricsTools import (
    CityYearFrame,
    build_city_year_frame,
    elasticity_regression,
    firm_regressions,
    growth_regression,
    scaling_summary,
    two_group_slopes,
)
from Tools.EconometricsTools.panel_core import spec_name
from Tools.EconometricsTools.synthetic import SyntheticConfig, generate_synthetic, write_bundle
from Tools.errors import ConfigInvalid, FormalCityError, InvalidConfig
from Tools.IngestTools import filter_sectors, load_dataset
from Tools.RelatednessTools import build_relatedness, complexity_potential, density, skill_proximity

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(message)s"
METHOD_ALIASES = {"eig": "eigenvector", "eigenvector": "eigenvector", "ref": "reflections", "reflections": "reflections"}

SPEC_HELP = """growth specifications (all with year dummies; --city-fe adds city dummies):
  table5 1: f_lag
  table5 2: f_lag, cp_lag
  table5 3: f_lag, cp_lag, bartik, d_govexp
  table5 4: table5 3 + cp_lag:bartik + cp_lag:d_govexp
  table6 1: f_lag, bartik, d_govexp, inst_quality, edu_quality
  table6 2: f_lag, cp_lag, inst_quality, edu_quality
  table6 3: f_lag, cp_lag, bartik, d_govexp, inst_quality, edu_quality"""


def configure_logging(verbose: int = 0, quiet: bool = False) -> None:
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _output_dir(args: argparse.Namespace) -> Path:
    directory = Path(args.out or os.environ.get(ENV_OUTPUT_DIR) or "output")
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _write(frame: pd.DataFrame, directory: Path, name: str) -> Path:
    path = directory / name
    frame.to_csv(path, index=False, lineterminator="\n")
    log.info("wrote %s (%d rows)", path, len(frame))
    return path


def _load(args: argparse.Namespace, path: str, kind: str):
    return load_dataset(path, kind, strict=not args.permissive, digits=args.digits)


def _employment(args: argparse.Namespace):
    panel = _load(args, args.employment, "employment")
    return panel if args.all_sectors else filter_sectors(panel)


def _year(panel, year: int | None) -> int:
    return panel.years[-1] if year is None else year


def _scores(panel, year: int, cutoff: float = 1.0, method: str = "eigenvector"):
    presence = binarize(compute_rca(panel, year), cutoff)
    return presence, compute_complexity(presence, METHOD_ALIASES[method])


def _potential_frame(panel, flows, clip_negative: bool, cutoff: float = 1.0, method: str = "eigenvector") -> pd.DataFrame:
    """Complexity potential of every city-year against the pooled relatedness matrix."""
    relatedness = build_relatedness(skill_proximity(flows.pooled()))
    frames = []
    for year in panel.years:
        presence, scores = _scores(panel, year, cutoff, method)
        frames.append(complexity_potential(density(relatedness, presence, clip_negative), scores).to_frame())
    return pd.concat(frames, ignore_index=True)


# -- handlers ----------------------------------------------------------------------------------------

def cmd_delineate(args: argparse.Namespace) -> int:
    commuting = _load(args, args.commuting, "commuting")
    assignment = delineate_metros(commuting, args.threshold, args.pop_floor)
    path = write_crosswalk(assignment, _output_dir(args) / "crosswalk.csv")
    log.info("%d metros, %d standalone cities, %d unassigned -> %s",
             len(assignment.metros), len(assignment.standalone), len(assignment.unassigned), path)
    return 0


def cmd_complexity(args: argparse.Namespace) -> int:
    panel = _employment(args)
    year = _year(panel, args.year)
    directory = _output_dir(args)
    rca = compute_rca(panel, year)
    presence = binarize(rca, args.cutoff)
    scores = compute_complexity(presence, METHOD_ALIASES[args.method], args.iterations, args.tolerance)
    _write(rca.to_frame(), directory, "rca.csv")
    _write(presence.to_frame(), directory, "presence.csv")
    _write(scores.to_frame(), directory, "complexity.csv")
    _write(city_complexity_summary(presence, scores).merge(scores.city_frame(), on="city", how="left"),
           directory, "city_summary.csv")
    _write(aggregate_complexity(scores, panel, args.level, year).rename(columns={"group": "division"}),
           directory, "division_complexity.csv")
    if "rank_correlation" in scores.diagnostics:
        log.info("reflections vs eigenvector rank correlation: %.4f", scores.diagnostics["rank_correlation"])
    return 0


def cmd_potential(args: argparse.Namespace) -> int:
    panel = _employment(args)
    year = _year(panel, args.year)
    directory = _output_dir(args)
    flows = _load(args, args.flows, "flows")
    flows = flows.for_year(year) if args.per_year else flows.pooled()
    relatedness = build_relatedness(skill_proximity(flows, include_diagonal=args.include_diagonal), year)
    presence, scores = _scores(panel, year, args.cutoff, args.method)
    table = density(relatedness, presence, clip_negative=not args.no_clip)
    cp = complexity_potential(table, scores, contributions=args.contributions)
    _write(relatedness.to_frame(), directory, "relatedness.csv")
    _write(table.to_frame(), directory, "density.csv")
    _write(cp.to_frame(), directory, "potential.csv")
    if args.contributions:
        _write(cp.contributions, directory, "potential_contributions.csv")
    return 0


def cmd_regress(args: argparse.Namespace) -> int:
    directory = _output_dir(args)
    if args.table == "elasticity":
        if not (args.employment and args.population):
            raise ConfigInvalid("regress elasticity needs --employment and --population", key="regress")
        panel = _employment(args)
        population = _load(args, args.population, "population")
        scores = {year: _scores(panel, year, args.cutoff, args.method)[1] for year in panel.years}
        curve = elasticity_regression(panel, population, scores, grid=args.grid, se_mode=args.se)
        slopes = two_group_slopes(panel, population, scores, se_mode=args.se)
        _write(curve.result.to_table(), directory, "elasticity.csv")
        _write(curve.to_frame(), directory, "elasticity_curve.csv")
        _write(slopes.to_frame(), directory, "two_group_slopes_plot.csv")
        _write(pd.DataFrame([curve.result.summary_row()]), directory, "diagnostics.csv")
        print(curve.result.to_table().to_string(index=False))
        return 0

    name = spec_name(int(args.table.removeprefix("table")), args.spec)
    if args.frame:
        frame = CityYearFrame.from_frame(pd.read_csv(args.frame, dtype={"city": str}))
    else:
        missing = [flag for flag in ("employment", "population", "flows") if not getattr(args, flag)]
        if missing: raise ConfigInvalid(f"regress {args.table} needs --frame or --{', --'.join(missing)}", key="regress")
        panel = _employment(args)
        population = _load(args, args.population, "population")
        potential = _potential_frame(panel, _load(args, args.flows, "flows"), clip_negative=True,
                                     cutoff=args.cutoff, method=args.method)
        aux = _load(args, args.aux, "aux") if args.aux else None
        frame = build_city_year_frame(panel, population, potential, aux)
    result = growth_regression(frame, name, city_fe=args.city_fe, se_mode=args.se)
    _write(result.to_table(), directory, f"{name}.csv")
    _write(pd.DataFrame([result.summary_row()]), directory, "diagnostics.csv")
    print(result.to_table().to_string(index=False))
    return 0


def cmd_firmstats(args: argparse.Namespace) -> int:
    directory = _output_dir(args)
    panel = _employment(args)
    firms = _load(args, args.firms, "firms")
    _, scores = _scores(panel, _year(panel, args.year), args.cutoff, args.method)
    rows = []
    for spec in ("entropy", "wage"):
        result = firm_regressions(firms, scores, spec, min_employees=args.min_employees, hr_controls=args.hr_controls,
                                  se_mode=args.se)
        _write(result.to_table(), directory, f"firm_{spec}.csv")
        rows.append(result.summary_row())
        print(result.to_table().to_string(index=False))
    _write(pd.DataFrame(rows), directory, "diagnostics.csv")
    return 0


def cmd_scaling(args: argparse.Namespace) -> int:
    directory = _output_dir(args)
    panel = _employment(args)
    population = _load(args, args.population, "population")
    year = _year(panel, args.year)
    presence, scores = _scores(panel, year, args.cutoff, args.method)
    summary = scaling_summary(panel, population, scores, presence, year)
    _write(summary.cities, directory, "city_scaling.csv")
    _write(summary.correlation_frame(), directory, "scaling_correlations.csv")
    _write(summary.layers, directory, "decile_layers.csv")
    for measure, value in summary.correlations.items():
        log.info("%s: %.3f", measure, value)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    overrides = {}
    if args.config:
        synthetic = load_config(args.config).synthetic
        if synthetic is None: raise ConfigInvalid("configuration has no synthetic section", path=args.config)
        overrides = synthetic.to_dict()
    overrides["seed"] = args.seed if args.seed is not None else overrides.get("seed", 42)
    config = SyntheticConfig.from_dict(overrides)
    config.validate()
    paths = write_bundle(generate_synthetic(config), _output_dir(args))
    log.info("wrote %d synthetic files to %s", len(paths), _output_dir(args))
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    environ = dict(os.environ)
    if args.threads is not None:
        environ[ENV_THREADS] = str(args.threads)
    if args.out:
        environ[ENV_OUTPUT_DIR] = args.out
    config = load_config(args.config, environ=environ)
    manifest = run_pipeline(config)
    print(json.dumps({"output": str(config.output_dir), "config_hash": manifest.config_hash,
                      "cache_hits": manifest.cache_hits()}, sort_keys=True))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = emit_report(args.output)
    print(path.read_text(encoding="utf-8"), end="")
    return 0


# -- parser ------------------------------------------------------------------------------------------

def _common(parser: argparse.ArgumentParser, *, out: bool = True) -> None:
    parser.add_argument("--permissive", action="store_true", help="drop invalid rows instead of failing")
    parser.add_argument("--digits", type=int, default=4, help="industry code length (default: 4)")
    if out:
        parser.add_argument("--out", help=f"output directory (default: ${ENV_OUTPUT_DIR} or ./output)")


def _complexity_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--employment", required=True, help="employment.csv (city,industry,year,employment)")
    parser.add_argument("--all-sectors", action="store_true", help="keep public administration and similar divisions")
    parser.add_argument("--method", choices=sorted(METHOD_ALIASES), default="eigenvector")
    parser.add_argument("--cutoff", type=float, default=1.0, help="RCA presence cutoff (strict >)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="FormalCity", description="Economic complexity and formal employment in cities.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("delineate", help="group municipalities into metro areas from commuting shares")
    p.add_argument("commuting", help="commuting.csv (origin,destination,share,origin_population)")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--pop-floor", type=int, default=DEFAULT_POP_FLOOR)
    _common(p)
    p.set_defaults(handler=cmd_delineate)

    p = sub.add_parser("complexity", help="RCA, presence matrix and industry/city complexity for one year")
    _complexity_args(p)
    p.add_argument("--year", type=int, help="default: last year of the panel")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--level", type=int, default=2, help="digit depth of the division table")
    _common(p)
    p.set_defaults(handler=cmd_complexity)

    p = sub.add_parser("potential", help="skill relatedness, density and complexity potential for one year")
    _complexity_args(p)
    p.add_argument("--flows", required=True, help="flows.csv (industry_from,industry_to,switches[,year])")
    p.add_argument("--year", type=int)
    p.add_argument("--no-clip", action="store_true", help="keep negative relatedness in density")
    p.add_argument("--per-year", action="store_true", help="use only the flows recorded for --year")
    p.add_argument("--include-diagonal", action="store_true", help="count same-industry switches in the totals")
    p.add_argument("--contributions", action="store_true", help="also write potential_contributions.csv")
    _common(p)
    p.set_defaults(handler=cmd_potential)

    p = sub.add_parser("regress", help="growth, elasticity regressions", epilog=SPEC_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("table", choices=("table5", "table6", "elasticity"))
    p.add_argument("--spec", type=int, default=1, help="column of the table")
    p.add_argument("--frame", help="city_year.csv from a previous run")
    p.add_argument("--employment")
    p.add_argument("--population")
    p.add_argument("--flows")
    p.add_argument("--aux")
    p.add_argument("--all-sectors", action="store_true")
    p.add_argument("--method", choices=sorted(METHOD_ALIASES), default="eigenvector")
    p.add_argument("--cutoff", type=float, default=1.0)
    p.add_argument("--city-fe", action="store_true", help="add city dummies")
    p.add_argument("--grid", type=int, default=21, help="CI grid points of the elasticity curve")
    p.add_argument("--se", choices=("robust", "classical"), default="robust")
    _common(p)
    p.set_defaults(handler=cmd_regress)

    p = sub.add_parser("firmstats", help="wage entropy and firm wage regressions on industry complexity")
    _complexity_args(p)
    p.add_argument("--firms", required=True)
    p.add_argument("--year", type=int, help="year whose complexity scores are used")
    p.add_argument("--min-employees", type=int, default=50)
    p.add_argument("--hr-controls", action="store_true")
    p.add_argument("--se", choices=("robust", "classical"), default="robust")
    _common(p)
    p.set_defaults(handler=cmd_firmstats)

    p = sub.add_parser("scaling", help="diversity and complexity against city size, decile layers")
    _complexity_args(p)
    p.add_argument("--population", required=True)
    p.add_argument("--year", type=int)
    _common(p)
    p.set_defaults(handler=cmd_scaling)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="pipeline YAML whose synthetic section is used")
    p.add_argument("--out", help=f"output directory (default: ${ENV_OUTPUT_DIR} or ./output)")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("run", help="run the full pipeline from a YAML configuration")
    p.add_argument("config")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="overrides output.directory")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("report", help="summarise an output directory")
    p.add_argument("output")
    p.set_defaults(handler=cmd_report)
    return parser


def _fail(error: BaseException, code: int) -> int:
    payload = error.to_dict() if isinstance(error, FormalCityError) else {"error": type(error).__name__, "message": str(error)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (ConfigInvalid, InvalidConfig) as exc:
        return _fail(exc, 2)
    except (FormalCityError, OSError, ValueError, KeyError) as exc:
        log.debug("command failed", exc_info=True)
        return _fail(exc, 1)
