import json
import logging

import pandas as pd
import pytest

import formal_city_cli
from pipeline_config import PipelineConfig, load_config
from pipeline_runner import STAGES, emit_report, run_pipeline
from Tools.ComplexityTools import binarize, compute_complexity, compute_rca
from Tools.errors import MissingOutput, StageFailure
from Tools.IngestTools import filter_sectors
from Tools.RelatednessTools import build_relatedness, complexity_potential, density, skill_proximity

SMALL_RUN = """
version: 1
synthetic:
  seed: 5
  n_cities: 15
  n_industries: 24
  n_divisions: 4
  n_years: 3
  n_firms: 300
  n_rural: 3
relatedness:
  contributions: true
econometrics:
  two_group_share: 0.5
output:
  directory: out
  threads: 2
"""


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(SMALL_RUN.strip() + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    directory = tmp_path_factory.mktemp("run")
    path = directory / "run.yaml"
    path.write_text(SMALL_RUN.strip() + "\n", encoding="utf-8")
    config = load_config(path, environ={})
    return config, run_pipeline(config)


def stable(manifest_path) -> dict:
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    data.pop("volatile")
    return data


def test_every_stage_runs_and_writes_its_outputs(finished_run):
    config, manifest = finished_run
    out = config.output_dir
    assert list(manifest.stages) == list(STAGES)
    assert manifest.cache_hits() == []
    for name in ("ingest/employment.csv", "ingest/crosswalk.csv", "complexity/2010/complexity.csv",
                 "relatedness/relatedness.csv", "potential/potential.csv", "potential/potential_contributions.csv",
                 "frame/city_year.csv", "tables/table5_col3.csv", "tables/elasticity.csv", "tables/firm_entropy.csv",
                 "tables/diagnostics.csv", "plots/city_scaling.csv", "plots/potential_growth.csv",
                 "plots/division_complexity.csv", "report.txt", "manifest.json"):
        assert (out / name).is_file(), name


def test_ingest_recovers_the_planted_cities(finished_run):
    config, manifest = finished_run
    employment = pd.read_csv(config.output_dir / "ingest" / "employment.csv", dtype={"city": str, "industry": str})
    assert employment["city"].nunique() == 15
    assert not employment["industry"].str[:2].isin(config.ingest.excluded_divisions).any()
    assert manifest.stages["ingest"].summary["delineation"]["unassigned"] == 3


def test_manifest_records_hashes_and_diagnostics(finished_run):
    config, manifest = finished_run
    data = json.loads((config.output_dir / "manifest.json").read_text(encoding="utf-8"))
    assert data["config_hash"] == config.config_hash()
    assert set(data["volatile"]) == {"generated_at", "timings", "cache"}
    assert data["diagnostics"]["econometrics"]["elasticity"]["gamma"] is not None
    assert all(len(digest) == 64 for stage in data["stages"].values() for digest in stage["outputs"].values())


def test_second_run_is_served_from_the_cache(finished_run):
    config, _ = finished_run
    before = stable(config.output_dir / "manifest.json")
    again = run_pipeline(config)
    assert again.cache_hits() == list(STAGES)
    assert stable(config.output_dir / "manifest.json") == before


def test_changed_parameter_reruns_downstream_stages(tmp_path):
    raw = {"synthetic": {"seed": 5, "n_cities": 10, "n_industries": 16, "n_divisions": 4, "n_years": 2,
                         "n_firms": 150, "n_rural": 2},
           "econometrics": {"two_group_share": 0.5, "specs": ["table5_col2"]},
           "output": {"directory": str(tmp_path / "out")}}
    run_pipeline(PipelineConfig.from_dict(raw).validate())
    raw["relatedness"] = {"clip_negative": False}
    manifest = run_pipeline(PipelineConfig.from_dict(raw).validate())
    assert manifest.cache_hits() == ["synthetic", "ingest", "complexity", "relatedness"]


def test_runs_in_separate_directories_agree(finished_run, tmp_path):
    config, _ = finished_run
    other = config.copy()
    other.output.directory = str(tmp_path / "elsewhere")
    other.output.threads = 1
    run_pipeline(other)
    assert stable(other.output_dir / "manifest.json") == stable(config.output_dir / "manifest.json")
    first = (config.output_dir / "report.txt").read_text(encoding="utf-8")
    assert (other.output_dir / "report.txt").read_text(encoding="utf-8") == first


def test_report_text(finished_run):
    config, _ = finished_run
    text = (config.output_dir / "report.txt").read_text(encoding="utf-8")
    assert text.startswith("FormalCity report\n")
    assert "cities: 15" in text
    assert "years: 2010-2012 (3)" in text
    assert "table5_col3:" in text and "cp_lag = " in text
    assert "complexity potential: positive" in text
    assert "models with max VIF above 10:" in text
    assert "plots/decile_layers.csv" in text


def test_report_needs_a_finished_run(tmp_path):
    with pytest.raises(MissingOutput):
        emit_report(tmp_path)


def test_stage_failure_names_the_stage(tmp_path):
    for name in ("employment", "population", "flows"):
        (tmp_path / f"{name}.csv").write_text("city,industry,year,employment\n05001,1511,2010,1\n", encoding="utf-8")
    (tmp_path / "run.yaml").write_text(
        "inputs:\n  employment: employment.csv\n  population: population.csv\n  flows: flows.csv\n", encoding="utf-8")
    config = load_config(tmp_path / "run.yaml", environ={})
    with pytest.raises(StageFailure) as info:
        run_pipeline(config)
    assert info.value.stage == "ingest"
    assert info.value.to_dict()["cause"]["error"] == "MissingColumn"


def test_cli_run_and_report(config_file, capsys):
    assert formal_city_cli.main(["-q", "run", str(config_file), "--threads", "1"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["cache_hits"] == []
    assert formal_city_cli.main(["-q", "report", printed["output"]]) == 0
    assert capsys.readouterr().out.startswith("FormalCity report")


def test_cli_configuration_errors_exit_with_two(tmp_path, capsys):
    assert formal_city_cli.main(["run", str(tmp_path / "absent.yaml")]) == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigInvalid"


def test_cli_data_errors_exit_with_one(tmp_path, capsys):
    path = tmp_path / "employment.csv"
    path.write_text("city,industry,year,employment\n05001,1511,2010,-2\n", encoding="utf-8")
    code = formal_city_cli.main(["-q", "complexity", "--employment", str(path), "--out", str(tmp_path / "out")])
    assert code == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "NegativeEmployment"
    assert error["line"] == 2
    assert formal_city_cli.main(["-q", "report", str(tmp_path / "nothing")]) == 1


def test_cli_analyses_on_a_synthetic_bundle(tmp_path):
    data, out = tmp_path / "data", tmp_path / "out"
    assert formal_city_cli.main(["-q", "synth", "--seed", "4", "--out", str(data)]) == 0
    employment = str(data / "employment.csv")
    assert formal_city_cli.main(["-q", "complexity", "--employment", employment, "--method", "ref",
                                 "--out", str(out)]) == 0
    complexity = pd.read_csv(out / "complexity.csv", dtype={"industry": str})
    assert complexity["ci"].min() == 0.0 and complexity["ci"].max() == 1.0
    assert formal_city_cli.main(["-q", "potential", "--employment", employment, "--flows", str(data / "flows.csv"),
                                 "--contributions", "--out", str(out)]) == 0
    assert (out / "potential_contributions.csv").is_file()
    assert formal_city_cli.main(["-q", "delineate", str(data / "commuting.csv"), "--out", str(out)]) == 0
    crosswalk = pd.read_csv(out / "crosswalk.csv", dtype=str)
    assert crosswalk.columns.tolist() == ["municipality", "city", "kind"]
    assert formal_city_cli.main(["-q", "regress", "table5", "--spec", "2", "--employment", employment,
                                 "--population", str(data / "population.csv"), "--flows", str(data / "flows.csv"),
                                 "--out", str(out)]) == 0
    table = pd.read_csv(out / "table5_col2.csv")
    assert table["term"].tolist() == ["const", "f_lag", "cp_lag"]
    assert formal_city_cli.main(["-q", "regress", "elasticity", "--out", str(out)]) == 2


def test_regress_potential_honours_method_and_cutoff(small_bundle):
    panel = filter_sectors(small_bundle.employment)
    frame = formal_city_cli._potential_frame(panel, small_bundle.flows, True, cutoff=1.5, method="ref")
    relatedness = build_relatedness(skill_proximity(small_bundle.flows.pooled()))
    expected = []
    for year in panel.years:
        presence = binarize(compute_rca(panel, year), 1.5)
        scores = compute_complexity(presence, "reflections")
        expected.append(complexity_potential(density(relatedness, presence), scores).to_frame())
    pd.testing.assert_frame_equal(frame, pd.concat(expected, ignore_index=True))


def test_population_floor_is_an_integer_option():
    parser = formal_city_cli.build_parser()
    assert parser.parse_args(["delineate", "commuting.csv", "--pop-floor", "20000"]).pop_floor == 20000
    assert isinstance(parser.parse_args(["delineate", "commuting.csv"]).pop_floor, int)
    with pytest.raises(SystemExit):
        parser.parse_args(["delineate", "commuting.csv", "--pop-floor", "2.5e4"])
