"""Experiment configuration: JSON document <-> nested dataclasses, presets, dotted overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import MISSING, dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import ConfigError
from .strategies import STRATEGIES


def _key(f) -> str:
    return f.metadata.get("key", f.name)


@dataclass
class ModelSection:
    hidden: list[int] = field(default_factory=lambda: [100, 100])


@dataclass
class TrainSection:
    learning_rate: float = 0.01
    iterations: int = 100
    # "fixed": keep the last iterate; "optimized": argmin of the scalarized objective
    mode: str = "fixed"
    batch_size: int | None = None
    eval_every: int = 10


@dataclass
class ObjectiveSection:
    alpha: float = 1.0
    normalize: bool = True


@dataclass
class RegSection:
    lam: float = field(default=75000.0, metadata={"key": "lambda"})
    gamma: float = 0.5


@dataclass
class SyncSection:
    cycles_per_sample: float = 125440.0
    frequency_hz: float = 4e9


@dataclass
class DataSection:
    source: str = "synthetic"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    synthetic_dim: int = 128
    # leading features that carry class signal; the rest stay 0 like blank border pixels
    synthetic_active: int = 16
    synthetic_classes: int = 10
    synthetic_train: int = 10000
    synthetic_test: int = 2000


@dataclass
class SweepSection:
    alphas: list[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])
    strategy: str = "ewcpp"


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    seed: int = 0
    episodes: int = 4
    samples_per_episode: int = 2000
    test_samples: int = 1000
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    workers: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    reg: RegSection = field(default_factory=RegSection)
    sync: SyncSection = field(default_factory=SyncSection)
    data: DataSection = field(default_factory=DataSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def validate(self) -> "ExperimentConfig":
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.samples_per_episode < 1:
            raise ConfigError("samples_per_episode must be >= 1")
        if self.test_samples < self.episodes:
            raise ConfigError("test_samples must give each episode at least one test image")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        for name in self.strategies + [self.sweep.strategy]:
            if name not in STRATEGIES:
                raise ConfigError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies must not repeat")
        if not self.model.hidden or any(int(h) < 1 for h in self.model.hidden):
            raise ConfigError("model.hidden needs at least one layer width >= 1")
        if not self.train.learning_rate > 0:
            raise ConfigError("train.learning_rate must be positive")
        if self.train.iterations < 0:
            raise ConfigError("train.iterations must be >= 0")
        if self.train.mode not in ("fixed", "optimized"):
            raise ConfigError("train.mode must be 'fixed' or 'optimized'")
        if self.train.eval_every < 1:
            raise ConfigError("train.eval_every must be >= 1")
        if self.train.batch_size is not None and self.train.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1 or null")
        if not 0.0 <= self.objective.alpha <= 1.0:
            raise ConfigError("objective.alpha must lie in [0, 1]")
        if self.reg.lam < 0 or not 0.0 <= self.reg.gamma <= 1.0:
            raise ConfigError("reg.lambda must be >= 0 and reg.gamma in [0, 1]")
        if not (self.sync.cycles_per_sample > 0 and self.sync.frequency_hz > 0):
            raise ConfigError("sync parameters must be positive")
        if self.data.source not in ("synthetic", "idx"):
            raise ConfigError("data.source must be 'synthetic' or 'idx'")
        if not 1 <= self.data.synthetic_active <= self.data.synthetic_dim:
            raise ConfigError("data.synthetic_active must lie in [1, data.synthetic_dim]")
        if self.data.synthetic_classes < 2:
            raise ConfigError("data.synthetic_classes must be >= 2")
        if any(not 0.0 <= a <= 1.0 for a in self.sweep.alphas):
            raise ConfigError("sweep.alphas must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        return _to_dict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return _from_dict(cls, doc, "").validate()


def _to_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        out[_key(f)] = _to_dict(value) if is_dataclass(value) else copy.deepcopy(value)
    return out


def _from_dict(cls, doc, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    by_key = {_key(f): f for f in fields(cls)}
    unknown = sorted(set(doc) - set(by_key))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(path + k for k in unknown)}")
    kwargs = {}
    for key, value in doc.items():
        f = by_key[key]
        default = f.default_factory() if f.default_factory is not MISSING else f.default
        if is_dataclass(default):
            kwargs[f.name] = _from_dict(type(default), value, f"{path}{key}.")
        else:
            kwargs[f.name] = _coerce(value, default, f"{path}{key}")
    return cls(**kwargs)


def _coerce(value, default, where):
    # light type checks; None is allowed where the default is None
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{where} must not be null")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{where} must be a list")
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string")
    return value


PRESETS = {
    "paper": {
        "preset": "paper",
        "episodes": 4,
        "samples_per_episode": 15000,
        "test_samples": 1000,
        "model": {"hidden": [256, 256]},
        "train": {"learning_rate": 0.01, "iterations": 100, "mode": "fixed"},
        "reg": {"lambda": 75000.0, "gamma": 0.5},
        "data": {"source": "idx"},
    },
    "desk": {
        "preset": "desk",
        "episodes": 4,
        "samples_per_episode": 2000,
        "test_samples": 1000,
        "model": {"hidden": [100, 100]},
        "train": {"learning_rate": 0.3, "iterations": 100, "mode": "fixed"},
        "reg": {"lambda": 40.0, "gamma": 0.5},
        "data": {"source": "synthetic", "synthetic_dim": 128, "synthetic_active": 16},
    },
}


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return _merge(ExperimentConfig().to_dict(), PRESETS[name])


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(doc: dict, key: str, value) -> dict:
    """Set a dotted-path key in a config document; the path must already exist."""
    doc = copy.deepcopy(doc)
    parts = key.split(".")
    node = doc
    for i, part in enumerate(parts):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key {'.'.join(parts[:i + 1])!r}")
        if i == len(parts) - 1:
            node[part] = value
        else:
            node = node[part]
    return doc


def build_config(path=None, preset: str | None = None, overrides=(), seed: int | None = None) -> ExperimentConfig:
    """Preset (or defaults), then the JSON file, then ``--set`` overrides, then ``--seed``."""
    doc = preset_dict(preset) if preset else ExperimentConfig().to_dict()
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        doc = _merge(doc, loaded)
    for item in overrides:
        doc = apply_override(doc, *parse_override(item))
    if seed is not None:
        doc["seed"] = seed
    return ExperimentConfig.from_dict(doc)
