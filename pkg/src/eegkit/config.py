"""Study configuration: a TOML tree mapped onto nested frozen dataclasses.

Every value has a default, so an empty file is a valid config. ``None``
defaults (automatic choices) are omitted from the dumped file; setting an
optional field to ``false`` selects ``None`` explicitly.
"""
from __future__ import annotations

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import tomli
import tomli_w

from .core import DEFAULT_MAX_ANGLE, EEGKitError
from .preprocess.pipeline import PipelineConfig
from .synth import ArtifactSpec, SubjectParams
from .tasks import TASKS

__all__ = [
    "ConfigError",
    "StudySettings",
    "StatsSettings",
    "StudyConfig",
    "load_config",
    "parse_config",
    "dump_config",
    "config_to_dict",
    "config_from_dict",
]


class ConfigError(EEGKitError):
    pass


@dataclass(frozen=True)
class StudySettings:
    n_subjects: int = 10
    seed: int = 0
    tasks: tuple = TASKS
    loopback: bool = True  # stream every recording through serve/record
    chunk_samples: int = 100
    jobs: int = 1

    def __post_init__(self):
        if self.n_subjects < 1:
            raise EEGKitError("n_subjects: must be at least 1")
        bad = [t for t in self.tasks if t not in TASKS]
        if bad or not self.tasks:
            raise EEGKitError(f"tasks: expected a non-empty subset of {list(TASKS)}, got {list(self.tasks)}")
        if self.jobs < 1:
            raise EEGKitError("jobs: must be at least 1")


@dataclass(frozen=True)
class StatsSettings:
    point_alpha: float = 0.05
    cluster_alpha: float = 0.05
    n_permutations: int = 1000
    seed: int = 0
    exact_when_feasible: bool = True
    max_angle: float = DEFAULT_MAX_ANGLE
    latency_range_ms: tuple = (-100.0, 500.0)
    alpha_band_hz: tuple = (8.0, 12.0)
    min_temporal_channels: int = 2
    p300_window_ms: tuple = (370.0, 500.0)
    n170_window_ms: tuple = (150.0, 200.0)

    def __post_init__(self):
        for name in ("point_alpha", "cluster_alpha"):
            if not 0 < getattr(self, name) < 1:
                raise EEGKitError(f"{name}: must lie strictly between 0 and 1")
        if self.n_permutations < 1:
            raise EEGKitError("n_permutations: must be at least 1")
        for name in ("latency_range_ms", "alpha_band_hz", "p300_window_ms", "n170_window_ms"):
            v = getattr(self, name)
            if len(v) != 2 or v[0] >= v[1]:
                raise EEGKitError(f"{name}: expected [low, high] with low < high, got {list(v)}")


@dataclass(frozen=True)
class StudyConfig:
    study: StudySettings = StudySettings()
    synth: SubjectParams = SubjectParams(artifacts=ArtifactSpec.dirty())
    pipeline: PipelineConfig = PipelineConfig()
    stats: StatsSettings = StatsSettings()

    def validate(self):
        for path, check in (("synth.auditory", self.synth.auditory.validate),
                            ("synth.visual", self.synth.visual.validate),
                            ("pipeline.filter", lambda: self.pipeline.filter.validate(self.synth.rate))):
            try:
                check()
            except EEGKitError as exc:
                raise ConfigError(f"[{path}] {exc}") from None
        unknown = set(self.synth.artifacts.bad_channels) - set(self.synth.channels)
        if unknown:
            raise ConfigError(f"[synth.artifacts] bad_channels: unknown channel {sorted(unknown)[0]}")
        return self


def _to_plain(value):
    if dataclasses.is_dataclass(value):
        out = {}
        for f in dataclasses.fields(value):
            v = getattr(value, f.name)
            if v is not None:
                out[f.name] = _to_plain(v)
        return out
    if isinstance(value, Mapping):
        return {str(k): _to_plain(v) for k, v in value.items()}
    if isinstance(value, (tuple, list)):
        return [_to_plain(v) for v in value]
    return value


def config_to_dict(cfg: StudyConfig) -> dict:
    return _to_plain(cfg)


def _type_name(v):
    return {bool: "boolean", int: "integer", float: "number", str: "string"}.get(type(v), type(v).__name__)


def _coerce(path, default, value):
    """Convert TOML ``value`` to the type of ``default``."""
    if dataclasses.is_dataclass(default):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected a table, got {_type_name(value)}")
        return _build(path, default, value)
    if default is None:
        return None if value is False else _freeze(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected boolean, got {_type_name(value)}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {_type_name(value)}")
        return value
    if isinstance(default, float):
        if value is False:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {_type_name(value)}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {_type_name(value)}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected array, got {_type_name(value)}")
        return _freeze(value)
    if isinstance(default, Mapping):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected a table, got {_type_name(value)}")
        return {str(k): _freeze(v) for k, v in value.items()}
    return value


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    if isinstance(v, Mapping):
        return {k: _freeze(x) for k, x in v.items()}
    return v


def _build(path, default, table):
    names = {f.name for f in dataclasses.fields(default) if f.init}
    unknown = sorted(set(table) - names)
    if unknown:
        where = f"[{path}]" if path else "top level"
        raise ConfigError(f"unknown field {path + '.' if path else ''}{unknown[0]} in {where}; "
                          f"expected one of: {', '.join(sorted(names))}")
    changes = {k: _coerce(f"{path}.{k}" if path else k, getattr(default, k), v) for k, v in table.items()}
    try:
        return dataclasses.replace(default, **changes)
    except EEGKitError as exc:
        raise ConfigError(f"[{path or 'top level'}] {exc}") from None


def config_from_dict(d, base: StudyConfig = None) -> StudyConfig:
    cfg = _build("", base or StudyConfig(), d)
    try:
        return cfg.validate()
    except EEGKitError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text, source="<config>") -> StudyConfig:
    try:
        d = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)"
        raise ConfigError(f"{source}: {exc}") from None
    try:
        return config_from_dict(d)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path=None) -> StudyConfig:
    if path is None:
        return StudyConfig().validate()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))


def dump_config(cfg: StudyConfig = None) -> str:
    return tomli_w.dumps(config_to_dict(cfg or StudyConfig()))
