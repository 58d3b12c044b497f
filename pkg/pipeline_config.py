"""Declarative configuration for a full FormalCity run."""
from __future__ import annotations

import hashlib
import json
import os
from copy import deepcopy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from Tools.ComplexityTools.complexity_core import METHODS
from Tools.EconometricsTools.ols_core import SE_MODES
from Tools.EconometricsTools.panel_core import GROWTH_SPECS
from Tools.EconometricsTools.synthetic import SyntheticConfig
from Tools.errors import ConfigInvalid, InvalidConfig
from Tools.IngestTools.ingest_core import DEFAULT_EXCLUDED_DIVISIONS


CONFIG_VERSION = 1
ENV_OUTPUT_DIR = "FORMALCITY_OUTPUT_DIR"
ENV_THREADS = "FORMALCITY_THREADS"


@dataclass
class InputsConfig:
    employment: str = ""
    population: str = ""
    flows: str = ""
    firms: str = ""
    aux: str = ""
    commuting: str = ""                 # municipal inputs: delineate, then aggregate
    crosswalk: str = ""                 # municipal inputs with a ready-made crosswalk


@dataclass
class IngestConfig:
    strict: bool = True
    digits: int = 4
    excluded_divisions: list[str] = field(default_factory=lambda: sorted(DEFAULT_EXCLUDED_DIVISIONS))


@dataclass
class DelineationConfig:
    threshold: float = 0.10
    pop_floor: float = 50_000.0


@dataclass
class YearsConfig:
    start: int | None = None
    end: int | None = None

    def contains(self, year: int) -> bool:
        return (self.start is None or year >= self.start) and (self.end is None or year <= self.end)


@dataclass
class ComplexityConfig:
    method: str = "eigenvector"
    iterations: int = 50
    tolerance: float = 1e-10
    cutoff: float = 1.0
    cross_check: bool = True
    aggregate_level: int = 2


@dataclass
class RelatednessConfig:
    clip_negative: bool = True
    pooled: bool = True
    include_diagonal: bool = False
    contributions: bool = False


@dataclass
class EconometricsConfig:
    specs: list[str] = field(default_factory=lambda: list(GROWTH_SPECS))
    city_fe: bool = False
    se_mode: str = "robust"
    elasticity_grid: int = 21
    two_group_share: float = 0.1
    min_employees: int = 50
    hr_controls: bool = False
    scaling_year: int | None = None


@dataclass
class OutputConfig:
    directory: str = "output"
    threads: int = 1


@dataclass
class PipelineConfig:
    version: int = CONFIG_VERSION
    inputs: InputsConfig = field(default_factory=InputsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    delineation: DelineationConfig = field(default_factory=DelineationConfig)
    years: YearsConfig = field(default_factory=YearsConfig)
    complexity: ComplexityConfig = field(default_factory=ComplexityConfig)
    relatedness: RelatednessConfig = field(default_factory=RelatednessConfig)
    econometrics: EconometricsConfig = field(default_factory=EconometricsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    synthetic: SyntheticConfig | None = None
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def copy(self) -> "PipelineConfig":
        return deepcopy(self)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("base_dir")
        return data

    @classmethod
    def from_dict(cls, raw: dict[str, Any] | None, base_dir: str | Path | None = None) -> "PipelineConfig":
        cfg = cls()
        if base_dir is not None:
            cfg.base_dir = Path(base_dir)
        if raw is None:
            return cfg
        if not isinstance(raw, dict): raise ConfigInvalid("configuration must be a mapping of sections")
        if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigInvalid(f"unsupported configuration version {raw.get('version')!r}", key="version")
        raw = dict(raw)
        synthetic = raw.pop("synthetic", None)
        _merge_dataclass(cfg, raw, "")
        if synthetic is not None:
            try:
                cfg.synthetic = SyntheticConfig.from_dict(synthetic)
            except InvalidConfig as exc:
                raise ConfigInvalid(exc.message, key="synthetic") from exc
        return cfg

    def resolve(self, value: str | Path) -> Path:
        path = Path(value).expanduser()
        return path if path.is_absolute() else (self.base_dir / path)

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.output.directory)

    def apply_env(self, environ: dict[str, str] | None = None) -> "PipelineConfig":
        environ = os.environ if environ is None else environ
        if environ.get(ENV_OUTPUT_DIR):
            self.output.directory = str(Path(environ[ENV_OUTPUT_DIR]).expanduser().resolve())
        if environ.get(ENV_THREADS):
            try:
                self.output.threads = int(environ[ENV_THREADS])
            except ValueError as exc:
                raise ConfigInvalid(f"{ENV_THREADS} must be an integer, got {environ[ENV_THREADS]!r}", key=ENV_THREADS) from exc
        return self

    def validate(self) -> "PipelineConfig":
        """Raise ConfigInvalid naming the first offending key or path."""
        inputs = self.inputs
        if self.synthetic is not None:
            try:
                self.synthetic.validate()
            except InvalidConfig as exc:
                raise ConfigInvalid(exc.message, key="synthetic") from exc
        else:
            for key in ("employment", "population", "flows"):
                if not getattr(inputs, key): raise ConfigInvalid(f"inputs.{key} is required", key=f"inputs.{key}")
            for key in ("employment", "population", "flows", "firms", "aux", "commuting", "crosswalk"):
                value = getattr(inputs, key)
                if value and not self.resolve(value).is_file():
                    raise ConfigInvalid(f"inputs.{key} does not exist", path=str(self.resolve(value)), key=f"inputs.{key}")
        if inputs.commuting and inputs.crosswalk:
            raise ConfigInvalid("set either inputs.commuting or inputs.crosswalk, not both", key="inputs")
        checks = [
            (self.ingest.digits >= 2, "ingest.digits", "must be at least 2"),
            (all(len(str(code)) == 2 and str(code).isdigit() for code in self.ingest.excluded_divisions),
             "ingest.excluded_divisions", "must be 2-digit division codes"),
            (0.0 < self.delineation.threshold < 1.0, "delineation.threshold", "must lie in (0, 1)"),
            (self.delineation.pop_floor > 0, "delineation.pop_floor", "must be positive"),
            (self.years.start is None or self.years.end is None or self.years.start <= self.years.end,
             "years", "start must not exceed end"),
            (self.complexity.method in METHODS, "complexity.method", f"must be one of {METHODS}"),
            (self.complexity.iterations >= 2, "complexity.iterations", "must be at least 2"),
            (self.complexity.tolerance > 0, "complexity.tolerance", "must be positive"),
            (self.complexity.cutoff > 0, "complexity.cutoff", "must be positive"),
            (1 <= self.complexity.aggregate_level <= self.ingest.digits, "complexity.aggregate_level",
             "must lie between 1 and the code length"),
            (all(spec in GROWTH_SPECS for spec in self.econometrics.specs), "econometrics.specs",
             f"must be taken from {sorted(GROWTH_SPECS)}"),
            (self.econometrics.se_mode in SE_MODES, "econometrics.se_mode", f"must be one of {SE_MODES}"),
            (self.econometrics.elasticity_grid >= 2, "econometrics.elasticity_grid", "must be at least 2"),
            (0.0 < self.econometrics.two_group_share <= 0.5, "econometrics.two_group_share", "must lie in (0, 0.5]"),
            (self.econometrics.min_employees >= 1, "econometrics.min_employees", "must be at least 1"),
            (self.output.threads >= 1, "output.threads", "must be at least 1"),
            (bool(self.output.directory), "output.directory", "must not be empty"),
        ]
        for ok, key, message in checks:
            if not ok: raise ConfigInvalid(f"{key} {message}", key=key)
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical config; the output location and thread count do not count."""
        data = self.to_dict()
        data.pop("output")
        return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def _merge_dataclass(target: Any, values: dict[str, Any], prefix: str) -> None:
    known = {item.name: item for item in fields(target)}
    for key, value in values.items():
        name = f"{prefix}{key}"
        if key not in known or key == "base_dir": raise ConfigInvalid(f"unknown configuration key {name}", key=name)
        current = getattr(target, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict): raise ConfigInvalid(f"{name} must be a section", key=name)
            _merge_dataclass(current, value, f"{name}.")
        else:
            setattr(target, key, _coerce(current, value, name))


def _coerce(current: Any, value: Any, name: str) -> Any:
    if value is None or current is None:
        return value
    try:
        if isinstance(current, bool):
            if not isinstance(value, bool): raise TypeError(f"expected true/false, got {value!r}")
            return value
        if isinstance(current, list):
            if not isinstance(value, list): raise TypeError(f"expected a list, got {value!r}")
            return [str(item) for item in value]
        return type(current)(value)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{name}: {exc}", key=name) from exc


def load_config(path: str | Path, *, environ: dict[str, str] | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file(): raise ConfigInvalid("configuration file does not exist", path=str(path))
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"configuration is not valid YAML: {exc}", path=str(path)) from exc
    return PipelineConfig.from_dict(raw, base_dir=path.resolve().parent).apply_env(environ).validate()
