"""One nested, JSON-serializable configuration for every experiment knob."""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .imitation import TrainingConfig
from .planner import PlannerParams
from .policies import ControllerConfig, ExpertController, GoalParams, ObstacleParams
from .vehicle import VehicleParams
from .world import EpisodeSetup, ScannerParams, SimParams
from .worldgen import WorldGenParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the dotted field."""


@dataclass(frozen=True)
class SuiteConfig:
    holdout_seed: int = 1000  # holdout world k uses seed holdout_seed + k
    holdout_worlds: int = 5
    episodes_per_world: int = 200
    student_episodes_per_world: int = 40  # per world when comparing the two students
    scenario_seed: int = 7
    train_seed: int = 0  # training world k uses seed train_seed + k


@dataclass(frozen=True)
class Config:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    scanner: ScannerParams = field(default_factory=ScannerParams)
    sim: SimParams = field(default_factory=SimParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    worldgen: WorldGenParams = field(default_factory=WorldGenParams)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    suite: SuiteConfig = field(default_factory=SuiteConfig)

    def setup(self) -> EpisodeSetup:
        return EpisodeSetup(self.vehicle, None, self.scanner, self.sim, self.planner)

    def expert(self) -> ExpertController:
        return ExpertController(self.controller, self.vehicle)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _convert(hints[key], value, f"{path}.{key}" if path else key)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _convert(tp, value, path: str):
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        args = typing.get_args(tp)
        inner = args[0] if args else float
        return tuple(_convert(inner, v, path) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def config_from_dict(data: dict) -> Config:
    return _build(Config, data, "")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: typing.Iterable[str]) -> dict:
    """Apply ``a.b.c=value`` assignments (value parsed as JSON when possible) to a plain dict."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"{item}: override must look like key.path=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"{key}: unknown key")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"{key}: unknown key")
        node[parts[-1]] = _parse_value(raw)
    return data


def load_config(path: str | Path | None = None, overrides: typing.Iterable[str] = ()) -> Config:
    """Defaults, then the JSON file (partial files allowed), then dotted overrides."""
    base = Config().to_dict()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        base = _merge(base, user, "")
    return config_from_dict(apply_overrides(base, overrides))


def _merge(base: dict, user, path: str) -> dict:
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    out = dict(base)
    for key, value in user.items():
        dotted = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{dotted}: unknown key")
        out[key] = _merge(base[key], value, dotted) if isinstance(base[key], dict) else value
    return out


__all__ = ["Config", "ConfigError", "SuiteConfig", "GoalParams", "ObstacleParams", "apply_overrides",
           "config_from_dict", "load_config"]
