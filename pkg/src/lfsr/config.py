"""Experiment configuration, stored as YAML.

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional, Union

import yaml

from .architectures import NetworkConfig
from .errors import ConfigError
from .nn.optim import TrainConfig

KEY_PRESETS = ("all", "middle")


@dataclass
class EvalOptions:
    perspectives: Union[str, List[List[int]]] = "all"  # "all", "middle" or [[u, v], ...]
    aggregation: str = "pooled"


@dataclass
class ExperimentConfig:
    train_fields: List[str] = field(default_factory=list)
    test_fields: List[str] = field(default_factory=list)
    data_dir: str = "data"
    model_dir: str = "models"
    seed: int = 0
    angular_net: NetworkConfig = field(default_factory=NetworkConfig)
    spatial_net: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    spatial_keys: Union[str, List[List[int]]] = "all"
    evaluation: EvalOptions = field(default_factory=EvalOptions)
    base_dir: Optional[str] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.spatial_keys, str) and self.spatial_keys not in KEY_PRESETS:
            raise ConfigError(f"spatial_keys must be {' or '.join(KEY_PRESETS)} or a list of [u, v, channel]")
        if not isinstance(self.spatial_keys, str):
            keys = []
            for k in self.spatial_keys:
                if len(k) != 3:
                    raise ConfigError(f"spatial key {k!r} must be [u, v, channel]")
                keys.append([int(x) for x in k])
            self.spatial_keys = keys
        if self.train.seed != self.seed:
            self.train = dataclasses.replace(self.train, seed=self.seed)

    def path(self, p) -> Path:
        p = Path(p)
        if p.is_absolute() or self.base_dir is None:
            return p
        return Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        d["train"].pop("seed")
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        d = dict(d or {})
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        try:
            for name, typ in (("angular_net", NetworkConfig), ("spatial_net", NetworkConfig),
                              ("evaluation", EvalOptions)):
                if name in d and isinstance(d[name], dict):
                    d[name] = typ(**d[name])
            if "train" in d and isinstance(d["train"], dict):
                train = dict(d["train"])
                train.setdefault("seed", d.get("seed", 0))
                d["train"] = TrainConfig(**train)
            return cls(**d, base_dir=None if base_dir is None else str(base_dir))
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data or {}, base_dir=path.parent)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed, train=dataclasses.replace(self.train, seed=seed))

    def validate_paths(self) -> None:
        missing = [p for p in [*self.train_fields, *self.test_fields] if not self.path(p).exists()]
        if missing:
            raise ConfigError(f"missing light-field container(s): {', '.join(missing)}")
        names = [Path(p).name for p in [*self.train_fields, *self.test_fields]]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"field directory names must be unique, duplicated: {', '.join(dupes)}")


def default_config_yaml() -> str:
    return ExperimentConfig().to_yaml()
