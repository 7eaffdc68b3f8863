"""Experiment configuration: a nested dataclass tree with YAML round trips.

Unknown keys and malformed values are rejected with the full field path
(e.g. ``tasks.racing.coeffs.progress``), so config typos fail loudly before
any compute is spent.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..curriculum import CurriculumConfig
from ..dynamics import QuadParams
from ..nets import NetConfig
from ..tasks import TaskId
from ..tasks.envs import RacingTaskConfig, StabilizationTaskConfig, TrackingTaskConfig
from ..trainer import TrainConfig

CONFIG_SCHEMA = 1


class ConfigError(ValueError):
    pass


@dataclass
class PolicyConfig:
    variant: str = "ours"
    one_hot: bool = True
    hover_thrust_init: bool = True


@dataclass
class EvalConfig:
    racing_starts: int = 64
    racing_horizon_s: float = 25.0
    stabilization_trials: int = 32
    tracking_trials: int = 16
    seed: int = 1000


@dataclass
class TasksConfig:
    enabled: list[str] = field(default_factory=lambda: ["racing", "stabilization", "tracking"])
    racing: RacingTaskConfig = field(default_factory=RacingTaskConfig)
    stabilization: StabilizationTaskConfig = field(default_factory=StabilizationTaskConfig)
    tracking: TrackingTaskConfig = field(default_factory=TrackingTaskConfig)


@dataclass
class ExperimentConfig:
    schema: int = CONFIG_SCHEMA
    out_dir: str = "runs/experiment"
    seeds: list[int] = field(default_factory=lambda: [0])
    eval_after_training: bool = True
    quad: QuadParams = field(default_factory=QuadParams)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    tasks: TasksConfig = field(default_factory=TasksConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def enabled_tasks(self) -> list[TaskId]:
        out = []
        for name in self.tasks.enabled:
            try:
                out.append(TaskId(name))
            except ValueError:
                raise ConfigError(f"tasks.enabled: unknown task {name!r}") from None
        if not out:
            raise ConfigError("tasks.enabled: at least one task required")
        return out

    def task_cfg(self, task: TaskId):
        return getattr(self.tasks, task.value)


_SCALAR_COERCIONS = {float: (int, float), int: (int,), bool: (bool,), str: (str,)}


def _build_dataclass(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"{path}.{key}: unknown key")
        kwargs[key] = _coerce(fields[key].type, value, f"{path}.{key}", cls)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _coerce(annotation, value, path: str, owner) -> object:
    if isinstance(annotation, str):
        annotation = typing.get_type_hints(owner)[path.rsplit(".", 1)[-1]]
    origin = typing.get_origin(annotation)
    if dataclasses.is_dataclass(annotation):
        return _build_dataclass(annotation, value, path)
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a sequence")
        args = typing.get_args(annotation)
        inner = args[0] if args else float
        coerced = [_coerce(inner, v, f"{path}[{i}]", owner) for i, v in enumerate(value)]
        return tuple(coerced) if origin is tuple else coerced
    if origin is typing.Union:  # Optional[...]
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path, owner)
    if annotation in _SCALAR_COERCIONS:
        if annotation is bool and not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean")
        if not isinstance(value, _SCALAR_COERCIONS[annotation]) or isinstance(value, bool) and annotation is not bool:
            raise ConfigError(f"{path}: expected {annotation.__name__}, got {type(value).__name__}")
        return annotation(value)
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a mapping at the top level")
    schema = data.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"schema: unsupported config schema {schema!r}")
    return _build_dataclass(ExperimentConfig, data, "config")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def convert(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: convert(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [convert(v) for v in obj]
        return obj

    return convert(cfg)


def load_config(path: str | Path) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text())
    return config_from_dict(data or {})


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
