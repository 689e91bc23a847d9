"""
Run configuration loading.

Precedence: CLI flags > environment variables > user config file >
``configs/<environment>/run_config.yaml`` > ``configs/shared_config.yaml``.
The merged dictionary is validated into a ``RunConfig``; unknown keys at any
level are errors.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import copy
import hashlib
import json

import yaml
from decouple import config
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core.synthetic import SyntheticSpec, describe_validation_error
from .core.trainer import TrainConfig
from .errors import ConfigError, MissingFileError
from .experiment.runner import Strategy
from .experiment.search import SearchSpec
from .utils.logging import get_logger
from .utils.seeding import derive_seed


logger = get_logger("ConfigLoader")

DEFAULT_CONFIGS_DIR = Path(__file__).parent.parent / "configs"

# environment variable -> dotted config key, with the value parser
ENV_OVERRIDES = {
    "SURVFUSION_SEED": ("seed", int),
    "SURVFUSION_JOBS": ("jobs", int),
    "SURVFUSION_LOG_LEVEL": ("logging.level", str),
    "SURVFUSION_OUTPUT_DIR": ("output_dir", str),
}


class CohortConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: Optional[str] = None
    leibovich_table: Optional[str] = None


class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    horizon_months: float = Field(60.0, gt=0)
    rt_repeats: int = Field(100, ge=2)


class LoggingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: str = "INFO"
    file: Optional[str] = None
    rotation: str = "10 MB"
    retention: str = "7 days"

    @field_validator("level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value!r}")
        return value


class SeedOverrides(BaseModel):
    """Explicit sub-seeds; anything left unset is derived from the master seed."""

    model_config = ConfigDict(extra="forbid")

    fold_plan: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    experiment: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    synthetic: Optional[int] = Field(None, ge=0, lt=2 ** 64)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    environment: str = "dev"
    cohort: CohortConfig = Field(default_factory=CohortConfig)
    strategies: List[Strategy] = Field(default_factory=lambda: list(Strategy))
    search: SearchSpec = Field(default_factory=SearchSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    seeds: SeedOverrides = Field(default_factory=SeedOverrides)
    jobs: int = Field(1, ge=1)
    output_dir: str = "runs/latest"
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @field_validator("strategies")
    @classmethod
    def _nonempty(cls, value: List[Strategy]) -> List[Strategy]:
        if not value:
            raise ValueError("at least one strategy is required")
        return sorted(set(value), key=Strategy.order)

    def fold_plan_seed(self) -> int:
        return self.seeds.fold_plan if self.seeds.fold_plan is not None else derive_seed(self.seed, "fold_plan")

    def experiment_seed(self) -> int:
        return self.seeds.experiment if self.seeds.experiment is not None else derive_seed(self.seed, "experiment")

    def synthetic_spec(self) -> SyntheticSpec:
        """The synthetic cohort spec with its seed resolved.

        ``seeds.synthetic`` wins, then an explicit ``synthetic.seed``; otherwise
        the seed is derived from the master seed.
        """
        if self.seeds.synthetic is not None:
            seed = self.seeds.synthetic
        elif "seed" in self.synthetic.model_fields_set:
            seed = self.synthetic.seed
        else:
            seed = derive_seed(self.seed, "synthetic")
        return SyntheticSpec.parse({**self.synthetic.model_dump(), "seed": seed})

    def leibovich_rt_seed(self) -> int:
        return derive_seed(self.seed, "leibovich_rt")

    def sha256(self) -> str:
        """Hash of the settings that determine results (jobs and logging excluded)."""
        payload = self.model_dump(mode="json", exclude={"jobs", "logging", "output_dir", "environment"})
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ConfigLoader:
    """Loads and merges configuration layers into a ``RunConfig``."""

    def __init__(self, configs_dir: Optional[Path] = None, environment: Optional[str] = None,
                 user_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Dict[str, Any]] = None):
        self.configs_dir = Path(configs_dir) if configs_dir else DEFAULT_CONFIGS_DIR
        self.environment = environment or config("ENVIRONMENT", default="dev")
        self.user_file = Path(user_file) if user_file else None
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.config: Dict[str, Any] = {}
        self._load()

    def _load_yaml(self, path: Path, required: bool = False) -> Dict[str, Any]:
        if not path.exists():
            if required:
                raise MissingFileError(f"config file not found: {path}")
            return {}
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return data

    def _deep_merge(self, base: Dict, update: Dict):
        for key, value in update.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._deep_merge(base[key], value)
            else:
                base[key] = copy.deepcopy(value)

    def _load(self):
        self.config = self._load_yaml(self.configs_dir / "shared_config.yaml")
        self._deep_merge(self.config, self._load_yaml(self.configs_dir / self.environment / "run_config.yaml"))
        if self.user_file is not None:
            self._deep_merge(self.config, self._load_yaml(self.user_file, required=True))
        self._load_env_overrides()
        for key, value in self.overrides.items():
            self.set(key, value)
        self.config["environment"] = self.environment

    def _load_env_overrides(self):
        for var, (key, cast) in ENV_OVERRIDES.items():
            raw = config(var, default=None)
            if raw is None or raw == "":
                continue
            try:
                self.set(key, cast(raw))
            except ValueError as e:
                raise ConfigError(f"{var}: cannot parse {raw!r}") from e

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value using dot notation."""
        value = self.config
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        keys = key.split(".")
        config_dict = self.config
        for k in keys[:-1]:
            config_dict = config_dict.setdefault(k, {})
        config_dict[keys[-1]] = value

    def build(self) -> RunConfig:
        try:
            run_config = RunConfig.model_validate(self.config)
        except ValidationError as e:
            raise ConfigError(describe_validation_error(e)) from e
        logger.debug(f"Loaded {self.environment} configuration (sha256 {run_config.sha256()[:12]})")
        return run_config


def load_run_config(user_file: Optional[Union[str, Path]] = None, environment: Optional[str] = None,
                    configs_dir: Optional[Path] = None, **overrides) -> RunConfig:
    """Merge every layer and validate; ``overrides`` use dotted keys (``seed``, ``jobs``, ...)."""
    return ConfigLoader(configs_dir=configs_dir, environment=environment,
                        user_file=user_file, overrides=overrides).build()


__all__ = ["ConfigLoader", "RunConfig", "load_run_config"]
