"""
Configuration management for rconvmk.

Two layers:

* ``Settings``: process-level settings from the environment / ``.env``
  (dataset root, output root, log level, worker count).
* ``ExperimentConfig``: one experiment, stored as a sectioned flat
  ``key = value`` text file (sections data, model, train, attack,
  corruption). Lists are comma-separated; an empty value means "unset".
"""

import configparser
import logging
import sys
import typing
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from rconvmk.blocks.rconv import Variant
from rconvmk.errors import ConfigError
from rconvmk.models.resnet import PRESETS, ModelSpec
from rconvmk.nn.functional import DEFAULT_TAU
from rconvmk.robustness.attacks import AttackKind


class Settings(BaseSettings):
    """Application settings with environment variable support (prefix RCMK_)."""

    model_config = SettingsConfigDict(env_prefix="RCMK_", env_file=".env", extra="ignore", case_sensitive=True)

    # App Config
    APP_NAME: str = "rconvmk"
    APP_VERSION: str = "1.0.0"

    # Paths
    DATA_DIR: str = "data"
    OUTPUT_DIR: str = "runs"

    # Runtime
    LOG_LEVEL: str = "INFO"
    WORKERS: int = 1


# Create global settings instance
settings = Settings()


def configure_logging(level: Union[str, int] = "INFO") -> None:
    """Install a single stream handler on the root logger."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s [%(name)s] %(message)s"))
    root.addHandler(handler)
    root.setLevel(level.upper() if isinstance(level, str) else level)


# ============================================================
# Experiment sections
# ============================================================
ATTACK_KINDS = tuple(kind.value for kind in AttackKind)
CORRUPTION_KINDS = ("gaussian_noise", "shot_noise", "impulse_noise", "box_blur", "contrast", "brightness")
DATASETS = ("mnist", "cifar10", "cifar100", "synthetic")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Section):
    dataset: str = "mnist"
    root: Optional[str] = None
    subset_n: Optional[int] = Field(default=None, ge=1)
    test_subset_n: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    synthetic_train_n: int = Field(default=512, ge=1)
    synthetic_test_n: int = Field(default=256, ge=1)

    @field_validator("dataset")
    @classmethod
    def _known_dataset(cls, v: str) -> str:
        if v not in DATASETS:
            raise ValueError(f"must be one of {', '.join(DATASETS)}")
        return v


class ModelSection(_Section):
    preset: str = "tiny"
    variant: Variant = Variant.MK
    widths: List[int] = Field(default_factory=lambda: [8, 16, 32])
    blocks_per_stage: int = Field(default=1, ge=1)
    num_classes: int = Field(default=10, ge=2)
    input_shape: Tuple[int, int, int] = (1, 28, 28)
    skip: bool = True
    k: int = 3
    a: int = Field(default=2, ge=1)
    tau: float = Field(default=DEFAULT_TAU, ge=0)
    resize_position: str = "after"
    seed: int = 0
    checkpoint: Optional[str] = None

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, v: str) -> str:
        if v != "custom" and v not in PRESETS:
            raise ValueError(f"must be one of {', '.join(sorted(PRESETS))}, custom")
        return v


class TrainSection(_Section):
    epochs: int = Field(default=5, ge=0)
    batch_size: int = Field(default=64, ge=1)
    eval_batch_size: int = Field(default=256, ge=1)
    lr: float = Field(default=0.05, ge=0)
    momentum: float = Field(default=0.9, ge=0)
    weight_decay: float = Field(default=0.0002, ge=0)
    milestones: List[int] = Field(default_factory=list)
    gamma: float = Field(default=0.1, gt=0)
    augment: bool = False
    crop_padding: int = Field(default=4, ge=0)
    adversarial: bool = False


class AttackSection(_Section):
    kinds: List[str] = Field(default_factory=lambda: list(ATTACK_KINDS))
    epsilon: float = Field(default=8 / 255, ge=0, le=1)
    step_size: float = Field(default=2 / 255, gt=0)
    num_steps: int = Field(default=10, ge=1)
    random_start: bool = True
    ffgsm_step_size: Optional[float] = Field(default=None, gt=0)
    batch_size: int = Field(default=256, ge=1)
    seed: int = 0

    @field_validator("kinds")
    @classmethod
    def _known_attacks(cls, v: List[str]) -> List[str]:
        unknown = [k for k in v if k not in ATTACK_KINDS]
        if unknown or not v:
            raise ValueError(f"kinds must be a non-empty subset of {', '.join(ATTACK_KINDS)}")
        return v


class CorruptionSection(_Section):
    kinds: List[str] = Field(default_factory=lambda: list(CORRUPTION_KINDS))
    severities: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    seed: int = 0
    batch_size: int = Field(default=256, ge=1)
    baseline_checkpoint: Optional[str] = None

    @field_validator("kinds")
    @classmethod
    def _known_corruptions(cls, v: List[str]) -> List[str]:
        unknown = [k for k in v if k not in CORRUPTION_KINDS]
        if unknown or not v:
            raise ValueError(f"kinds must be a non-empty subset of {', '.join(CORRUPTION_KINDS)}")
        return v

    @field_validator("severities")
    @classmethod
    def _severity_range(cls, v: List[int]) -> List[int]:
        if not v or any(s < 0 or s > 5 for s in v):
            raise ValueError("severities must be a non-empty list of integers in 0..5")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    attack: AttackSection = Field(default_factory=AttackSection)
    corruption: CorruptionSection = Field(default_factory=CorruptionSection)

    def resolved_spec(self) -> ModelSpec:
        """Resolved model spec; ``tiny`` / ``small`` presets fix widths, depth and input."""
        m = self.model
        fields = {
            "widths": m.widths, "blocks_per_stage": m.blocks_per_stage,
            "num_classes": m.num_classes, "input_shape": m.input_shape,
        }
        if m.preset != "custom":
            fields.update(PRESETS[m.preset])
        try:
            return ModelSpec(variant=m.variant, skip=m.skip, k=m.k, a=m.a, tau=m.tau,
                             resize_position=m.resize_position, **fields)
        except ValidationError as e:
            raise ConfigError(_format_errors("model", e)) from e


SECTIONS: Dict[str, type] = {
    "data": DataSection,
    "model": ModelSection,
    "train": TrainSection,
    "attack": AttackSection,
    "corruption": CorruptionSection,
}


# ============================================================
# Text <-> config
# ============================================================
def _is_sequence(annotation: Any) -> bool:
    origin = typing.get_origin(annotation)
    if origin is Union:
        return any(_is_sequence(arg) for arg in typing.get_args(annotation) if arg is not type(None))
    return origin in (list, tuple, List, Tuple)


def _is_optional(annotation: Any) -> bool:
    return typing.get_origin(annotation) is Union and type(None) in typing.get_args(annotation)


def _parse_value(raw: str, annotation: Any) -> Any:
    raw = raw.strip()
    if raw == "" and _is_optional(annotation):
        return None
    if _is_sequence(annotation):
        return [item.strip() for item in raw.split(",") if item.strip()]
    return raw


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _format_errors(section: str, error: ValidationError) -> str:
    parts = []
    for err in error.errors():
        loc = ".".join(str(p) for p in err["loc"] if not isinstance(p, int))
        path = f"{section}.{loc}" if loc else section
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def _build(raw_sections: Dict[str, Dict[str, str]]) -> ExperimentConfig:
    values: Dict[str, Any] = {}
    for section, items in raw_sections.items():
        if section not in SECTIONS:
            raise ConfigError(f"{section}: unknown section (expected {', '.join(SECTIONS)})")
        model_cls = SECTIONS[section]
        parsed = {}
        for key, raw in items.items():
            if key not in model_cls.model_fields:
                raise ConfigError(f"{section}.{key}: unknown key")
            parsed[key] = _parse_value(raw, model_cls.model_fields[key].annotation)
        try:
            values[section] = model_cls(**parsed)
        except ValidationError as e:
            raise ConfigError(_format_errors(section, e)) from e
    return ExperimentConfig(**values)


def _read_sections(text: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from e
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_config(text: str) -> ExperimentConfig:
    return _build(_read_sections(text))


def config_sections(cfg: ExperimentConfig) -> Dict[str, Dict[str, str]]:
    return {
        name: {key: _format_value(getattr(getattr(cfg, name), key)) for key in cls.model_fields}
        for name, cls in SECTIONS.items()
    }


def emit_config(cfg: ExperimentConfig) -> str:
    """Config text that ``parse_config`` maps back to an equal config."""
    lines = []
    for name, items in config_sections(cfg).items():
        lines.append(f"[{name}]")
        lines.extend(f"{key} = {value}" for key, value in items.items())
        lines.append("")
    return "\n".join(lines)


def load_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def apply_overrides(cfg: ExperimentConfig, overrides: Sequence[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` overrides and re-validate."""
    if not overrides:
        return cfg
    sections = config_sections(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        path, value = item.split("=", 1)
        section, _, key = path.strip().partition(".")
        if section not in sections:
            raise ConfigError(f"{path.strip()}: unknown section")
        if key not in sections[section]:
            raise ConfigError(f"{path.strip()}: unknown key")
        sections[section][key] = value.strip()
    return _build(sections)
