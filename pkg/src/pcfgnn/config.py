"""
Configuration management for pcfgnn.

Two layers:
- ``Settings``: process-level settings from the environment (``PCFGNN_*``) or ``.env``.
- Run configuration: a key=value file whose dotted sections (``pretrain.*``,
  ``ctr.*``, ...) are validated by pydantic models. CLI flags override file
  values, which override model defaults.
"""

from collections.abc import Mapping
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from pcfgnn.errors import ConfigError

ConfigValues = dict[str, list[str]]
M = TypeVar("M", bound=BaseModel)


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="PCFGNN_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # Default run-config file for subcommands invoked without --config
    config: Path | None = None

    # Run ledger
    database_url: str = "sqlite:///.pcfgnn/runs.db"
    record_runs: bool = True


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def _none_token(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("", "none", "full", "unlimited"):
        return None
    return value


def _int_tuple(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(int(part) for part in value.replace(" ", "").split(",") if part)
    return value


class TrainConfig(BaseModel):
    """Pre-training hyperparameters (``pretrain.*`` keys)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    embedding_dim: int = Field(8, ge=1)
    # One entry per encoder layer; the empty tuple is the K=0 ("Base") encoder
    layer_widths: tuple[int, ...] = (64, 8)
    epochs: int = Field(300, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    # None means full batch
    batch_size: int | None = Field(None, ge=1)
    t: float = 1.0
    weighted_loss: bool = True
    optimizer: Literal["adam", "sgd"] = "adam"
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    seed: int = 0
    fanout: int | None = Field(None, ge=1)
    dtype: Literal["float32", "float64"] = "float32"

    parse_tuples = field_validator("layer_widths", mode="before")(_int_tuple)
    parse_nones = field_validator("batch_size", "fanout", mode="before")(_none_token)

    @field_validator("layer_widths")
    @classmethod
    def _positive_widths(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(w < 1 for w in value):
            raise ValueError("layer widths must be positive")
        return value

    @model_validator(mode="after")
    def _smoothing_positive(self) -> "TrainConfig":
        if self.weighted_loss and self.t <= 0:
            raise ValueError("t must be positive when weighted_loss is on")
        return self

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths)

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1] if self.layer_widths else self.embedding_dim


class CtrConfig(BaseModel):
    """Downstream Embedding&MLP hyperparameters (``ctr.*`` keys)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    embedding_dim: int = Field(8, ge=1)
    # Hidden layers; a single-unit sigmoid output layer is always appended
    hidden_widths: tuple[int, ...] = (64, 32)
    epochs: int = Field(5, ge=1)
    learning_rate: float = Field(0.002, gt=0)
    batch_size: int = Field(256, ge=1)
    finetune: bool = False
    # Learning rate for PCF-GNN tensors while fine-tuning
    finetune_learning_rate: float = Field(0.001, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    seed: int = 0
    dtype: Literal["float32", "float64"] = "float32"

    parse_tuples = field_validator("hidden_widths", mode="before")(_int_tuple)


def parse_config_text(text: str, source: str = "<config>") -> ConfigValues:
    """
    Parse key=value lines.

    ``#`` starts a comment line, blank lines are skipped, and repeated keys
    accumulate in order.
    """
    values: ConfigValues = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        values.setdefault(key, []).append(value.strip())
    return values


def load_config_file(path: str | Path) -> ConfigValues:
    """Read and parse a config file; a missing file is a ``ConfigError`` naming the path."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, source=str(path))


def section(values: Mapping[str, list[str]], prefix: str) -> dict[str, str]:
    """Keys under ``prefix.``, with the prefix stripped; the last occurrence wins."""
    marker = prefix + "."
    return {k[len(marker) :]: v[-1] for k, v in values.items() if k.startswith(marker)}


def build_section(
    model: type[M],
    values: Mapping[str, list[str]],
    prefix: str,
    overrides: Mapping[str, Any] | None = None,
) -> M:
    """
    Validate one config section into ``model``.

    ``overrides`` (CLI flags) win over file values; ``None`` overrides are ignored.
    """
    data: dict[str, Any] = dict(section(values, prefix))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return model.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{prefix}.{'.'.join(str(p) for p in err['loc']) or '?'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(problems) from e


def top_level(values: Mapping[str, list[str]], key: str, default: str | None = None) -> str | None:
    """Last value of a top-level key."""
    found = values.get(key)
    return found[-1] if found else default


def top_level_int(values: Mapping[str, list[str]], key: str, default: int) -> int:
    raw = top_level(values, key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from e
