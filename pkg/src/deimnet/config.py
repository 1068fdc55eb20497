"""Run configuration: one YAML file covering every pipeline stage.

Defaults reproduce the published hyperparameters (regularization 1e-7,
ordering penalty 1000, patience 400, 80/20 train/validation split, 50/28/300
interpolation points for the three tasks).  Parsing is strict: unknown keys
are rejected with their full path, and each section's own validation runs at
parse time, so a config that loads is a config that runs.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .datagen import KsConfig, RdConfig
from .errors import ConfigError
from .trainer import TrainConfig


@dataclass(frozen=True)
class ClassificationOptions:
    m: int = 50
    width: int = 10
    residual_blocks: int = 2
    single_width: int = 50
    single_residual_blocks: int = 2
    digits: tuple = tuple(range(10))
    per_class_train: int = 5000
    per_class_val: int = 1000
    split: tuple = (50_000, 10_000, 10_000)

    def __post_init__(self):
        if self.m < 1 or self.width < 1 or self.single_width < 1:
            raise ConfigError("m and widths must be positive")
        if len(set(self.digits)) != len(self.digits):
            raise ConfigError("digits must be distinct")
        if len(self.split) != 3 or min(self.split) < 1:
            raise ConfigError("split needs three positive pool sizes")


@dataclass(frozen=True)
class ParamMapOptions:
    m: int = 28
    width: int = 5
    residual_blocks: int = 2
    single_width: int = 28
    single_residual_blocks: int = 2

    def __post_init__(self):
        if self.m < 1 or self.width < 1 or self.single_width < 1:
            raise ConfigError("m and widths must be positive")


@dataclass(frozen=True)
class OneStepOptions:
    m: int = 300
    width: int = 3
    residual_blocks: int = 7
    single_width: int = 300
    single_residual_blocks: int = 3
    stencil_size: int = 3
    topology: str = "periodic"
    rollout_steps: int = 10

    def __post_init__(self):
        if self.m < 1 or self.width < 1 or self.single_width < 1:
            raise ConfigError("m and widths must be positive")
        if self.stencil_size < 1:
            raise ConfigError("stencil_size must be positive")
        if self.topology not in ("periodic", "bounded"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.rollout_steps < 0:
            raise ConfigError("rollout_steps must be nonnegative")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    ks: KsConfig = KsConfig()
    rd: RdConfig = RdConfig()
    train: TrainConfig = TrainConfig()
    classification: ClassificationOptions = ClassificationOptions()
    param_map: ParamMapOptions = ParamMapOptions()
    one_step: OneStepOptions = OneStepOptions()


_SECTIONS = {
    "ks": KsConfig,
    "rd": RdConfig,
    "train": TrainConfig,
    "classification": ClassificationOptions,
    "param_map": ParamMapOptions,
    "one_step": OneStepOptions,
}


def _coerce(value, default):
    # YAML has no tuple literal; match the default's nesting
    if isinstance(default, tuple) and isinstance(value, (list, tuple)):
        if default and isinstance(default[0], tuple):
            return tuple(tuple(v) for v in value)
        return tuple(value)
    return value


def _build_section(cls, section, path):
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(section).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - set(fields))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    defaults = cls()
    kwargs = {
        key: _coerce(value, getattr(defaults, key))
        for key, value in section.items()
    }
    try:
        return cls(**kwargs)
    except (ConfigError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err


def parse_config(raw: dict) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = set(_SECTIONS) | {"seed", "workers"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key in ("seed", "workers"):
        if key in raw:
            value = raw[key]
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"{key}: must be a nonnegative integer")
            if key == "workers" and value < 1:
                raise ConfigError("workers: must be at least 1")
            kwargs[key] = value
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build_section(cls, raw.get(name), name)
    return RunConfig(**kwargs)


def load_config(path=None) -> RunConfig:
    """Parse ``path`` (YAML) into a RunConfig; defaults when path is None."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from err
    return parse_config(raw)
