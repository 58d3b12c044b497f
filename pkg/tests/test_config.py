from pathlib import Path

import pytest

from pipeline_config import ENV_OUTPUT_DIR, ENV_THREADS, PipelineConfig, YearsConfig, load_config
from Tools.errors import ConfigInvalid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_yaml(path: Path, text: str) -> Path:
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


@pytest.fixture
def inputs(tmp_path):
    for name in ("employment", "population", "flows"):
        (tmp_path / f"{name}.csv").write_text("x\n", encoding="utf-8")
    return tmp_path


def explicit(directory: Path, extra: str = "") -> Path:
    return write_yaml(directory / "run.yaml", f"""
version: 1
inputs:
  employment: employment.csv
  population: population.csv
  flows: flows.csv
{extra}
""")


def test_shipped_synthetic_config_loads():
    config = load_config(CONFIGS / "synthetic.yaml", environ={})
    assert config.synthetic is not None and config.synthetic.seed == 42
    assert config.relatedness.contributions is True
    assert config.output.threads == 2
    assert config.output_dir == (CONFIGS / ".." / "output" / "synthetic")


def test_relative_inputs_resolve_against_the_config_file(inputs):
    config = load_config(explicit(inputs), environ={})
    assert config.resolve(config.inputs.employment).resolve() == (inputs / "employment.csv").resolve()
    assert config.complexity.method == "eigenvector"
    assert config.econometrics.se_mode == "robust"


def test_unknown_key_is_named(inputs):
    with pytest.raises(ConfigInvalid) as info:
        load_config(explicit(inputs, "econometrics:\n  cluster: city"), environ={})
    assert info.value.details["key"] == "econometrics.cluster"


def test_wrong_types_are_rejected(inputs):
    with pytest.raises(ConfigInvalid):
        load_config(explicit(inputs, "relatedness:\n  pooled: 'yes'"), environ={})
    with pytest.raises(ConfigInvalid):
        load_config(explicit(inputs, "complexity:\n  iterations: many"), environ={})
    with pytest.raises(ConfigInvalid):
        load_config(explicit(inputs, "complexity: eigenvector"), environ={})


@pytest.mark.parametrize("extra, key", [
    ("delineation:\n  threshold: 1.0", "delineation.threshold"),
    ("complexity:\n  method: fitness", "complexity.method"),
    ("complexity:\n  aggregate_level: 5", "complexity.aggregate_level"),
    ("econometrics:\n  specs: [table7_col1]", "econometrics.specs"),
    ("econometrics:\n  two_group_share: 0.8", "econometrics.two_group_share"),
    ("years:\n  start: 2015\n  end: 2010", "years"),
    ("ingest:\n  excluded_divisions: ['751']", "ingest.excluded_divisions"),
])
def test_range_checks(inputs, extra, key):
    with pytest.raises(ConfigInvalid) as info:
        load_config(explicit(inputs, extra), environ={})
    assert info.value.details["key"] == key


def test_missing_input_file_is_reported(inputs):
    (inputs / "flows.csv").unlink()
    with pytest.raises(ConfigInvalid) as info:
        load_config(explicit(inputs), environ={})
    assert info.value.details["key"] == "inputs.flows"
    assert "flows.csv" in info.value.details["path"]


def test_required_inputs_without_synthetic_section(tmp_path):
    with pytest.raises(ConfigInvalid) as info:
        load_config(write_yaml(tmp_path / "run.yaml", "version: 1"), environ={})
    assert info.value.details["key"] == "inputs.employment"


def test_commuting_and_crosswalk_are_exclusive(inputs):
    for name in ("commuting", "crosswalk"):
        (inputs / f"{name}.csv").write_text("x\n", encoding="utf-8")
    text = "  commuting: commuting.csv\n  crosswalk: crosswalk.csv"
    path = write_yaml(inputs / "run.yaml", explicit(inputs).read_text().rstrip("\n") + "\n" + text)
    with pytest.raises(ConfigInvalid) as info:
        load_config(path, environ={})
    assert info.value.details["key"] == "inputs"


def test_unsupported_version(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(write_yaml(tmp_path / "run.yaml", "version: 2"), environ={})


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "absent.yaml")
    with pytest.raises(ConfigInvalid):
        load_config(write_yaml(tmp_path / "bad.yaml", "inputs: [unclosed"))
    with pytest.raises(ConfigInvalid):
        load_config(write_yaml(tmp_path / "list.yaml", "- 1\n- 2"))


def test_bad_synthetic_section(tmp_path):
    with pytest.raises(ConfigInvalid) as info:
        load_config(write_yaml(tmp_path / "run.yaml", "synthetic:\n  n_towns: 4"), environ={})
    assert info.value.details["key"] == "synthetic"
    with pytest.raises(ConfigInvalid):
        load_config(write_yaml(tmp_path / "run.yaml", "synthetic:\n  n_cities: 1"), environ={})


def test_environment_overrides(inputs, tmp_path):
    target = tmp_path / "elsewhere"
    config = load_config(explicit(inputs), environ={ENV_OUTPUT_DIR: str(target), ENV_THREADS: "3"})
    assert config.output.threads == 3
    assert config.output_dir == target.resolve()
    with pytest.raises(ConfigInvalid) as info:
        load_config(explicit(inputs), environ={ENV_THREADS: "all"})
    assert info.value.details["key"] == ENV_THREADS


def test_hash_ignores_output_settings():
    a = PipelineConfig.from_dict({"synthetic": {"seed": 1}, "output": {"directory": "a", "threads": 1}})
    b = PipelineConfig.from_dict({"synthetic": {"seed": 1}, "output": {"directory": "b", "threads": 4}})
    c = PipelineConfig.from_dict({"synthetic": {"seed": 1}, "complexity": {"method": "reflections"}})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert a.copy().config_hash() == a.config_hash()


def test_year_window():
    window = YearsConfig(start=2011, end=2013)
    assert [year for year in range(2009, 2016) if window.contains(year)] == [2011, 2012, 2013]
    assert YearsConfig().contains(1990)
