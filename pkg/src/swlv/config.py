"""Typed configuration objects and the sectioned key=value file format.

A config file is an INI-style document with one section per component::

    [world]
    width = 500
    n_predators = 2500

    [engine]
    mode = DYNAMICS

Every key is optional; missing keys take the dataclass default. Unknown
sections or keys are rejected so typos never silently fall back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import ConfigError


class Mode(str, Enum):
    DYNAMICS = "DYNAMICS"
    TRANSFER = "TRANSFER"
    ABLATION = "ABLATION"
    GROUPING = "GROUPING"


@dataclass
class WorldConfig:
    width: int = 1000
    height: int = 1000
    n_predators: int = 10000
    n_prey_group: int = 5000
    n_prey_solo: int = 0
    obstacle_density: float = 0.01
    # view geometry: rows ahead (including own row) x lateral cells
    view_depth: int = 7
    view_width: int = 7
    group_prey_radius: int = 3
    group_prey_threshold: int = 2
    group_prey_reward: float = 1.0
    solo_prey_radius: int = 1
    solo_prey_reward: float = 0.3

    def validate(self):
        for key in ("width", "height", "view_depth", "view_width"):
            if getattr(self, key) < 1:
                raise ConfigError(f"world.{key}", "must be >= 1")
        for key in ("n_predators", "n_prey_group", "n_prey_solo",
                    "group_prey_radius", "solo_prey_radius"):
            if getattr(self, key) < 0:
                raise ConfigError(f"world.{key}", "must be >= 0")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise ConfigError("world.obstacle_density", "must lie in [0, 1)")
        if self.group_prey_threshold < 1:
            raise ConfigError("world.group_prey_threshold",
                              "capture threshold must be >= 1")
        if self.view_width % 2 != 1:
            raise ConfigError("world.view_width", "must be odd so the agent is centred")
        for key in ("group_prey_reward", "solo_prey_reward"):
            if getattr(self, key) < 0:
                raise ConfigError(f"world.{key}", "must be >= 0")
        n_cells = self.width * self.height
        n_obstacles = int(round(self.obstacle_density * n_cells))
        if n_cells - n_obstacles < 1 and (self.n_predators or self.n_prey_group or self.n_prey_solo):
            raise ConfigError("world.obstacle_density", "no free cell left for entities")


@dataclass
class LifecycleConfig:
    prey_birth_rate: float = 0.006
    predator_birth_rate: float = 0.003
    health_decay: float = 0.01
    reproduce_health_threshold: float = 1.0
    # 0 means one prey per free cell
    prey_capacity: int = 0

    def validate(self):
        for key in ("prey_birth_rate", "predator_birth_rate"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(f"lifecycle.{key}", "must lie in [0, 1]")
        if self.health_decay < 0:
            raise ConfigError("lifecycle.health_decay", "must be >= 0")
        if self.prey_capacity < 0:
            raise ConfigError("lifecycle.prey_capacity", "must be >= 0")


@dataclass
class LearnerConfig:
    epsilon: float = 0.1
    discount_gamma: float = 0.9
    learning_rate: float = 0.001
    batch_size: int = 1024
    learning_enabled: bool = True

    def validate(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("learner.epsilon", "must lie in [0, 1]")
        if not 0.0 <= self.discount_gamma < 1.0:
            raise ConfigError("learner.discount_gamma", "must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ConfigError("learner.learning_rate", "must be > 0")
        if self.batch_size < 1:
            raise ConfigError("learner.batch_size", "must be >= 1")


@dataclass
class ZookeeperConfig:
    threshold: int = 0
    refill_amount: int = 0

    def validate(self):
        if self.threshold < 0:
            raise ConfigError("zookeeper.threshold", "must be >= 0")
        if self.refill_amount < 0:
            raise ConfigError("zookeeper.refill_amount", "must be >= 0")


@dataclass
class EngineConfig:
    mode: Mode = Mode.DYNAMICS
    eternal_longevity: bool = False
    total_steps: int = 1000
    record_every: int = 10
    seed: int = 0
    # write a resumable snapshot every N steps (0 disables)
    checkpoint_every: int = 0
    # pre-step rollback copies go to disk above this many entities
    snapshot_on_disk_above: int = 2_000_000

    def validate(self):
        if self.total_steps < 1:
            raise ConfigError("engine.total_steps", "must be >= 1")
        if self.record_every < 1:
            raise ConfigError("engine.record_every", "must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("engine.checkpoint_every", "must be >= 0")


@dataclass
class SimConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    lifecycle: LifecycleConfig = field(default_factory=LifecycleConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    zookeeper: ZookeeperConfig = field(default_factory=ZookeeperConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)

    @property
    def mode(self):
        return self.engine.mode

    def validate(self):
        self.world.validate()
        self.lifecycle.validate()
        self.learner.validate()
        self.zookeeper.validate()
        self.engine.validate()
        if self.engine.mode is Mode.GROUPING and not self.engine.eternal_longevity:
            raise ConfigError("engine.eternal_longevity", "GROUPING mode requires eternal longevity")
        if self.engine.mode is Mode.ABLATION and self.learner.learning_enabled:
            raise ConfigError("learner.learning_enabled", "ABLATION mode requires learning disabled")
        return self


SECTIONS = {
    "world": WorldConfig,
    "lifecycle": LifecycleConfig,
    "learner": LearnerConfig,
    "zookeeper": ZookeeperConfig,
    "engine": EngineConfig,
}

# sections carried along by run manifests; ignored when loading a SimConfig
PASSTHROUGH_SECTIONS = ("manifest",)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(section, key, raw, typ):
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw.replace("_", ""))
        if typ is float:
            return float(raw)
        if typ is Mode:
            return Mode(raw.upper())
    except ValueError:
        raise ConfigError(where, f"cannot parse {raw!r} as {typ.__name__}") from None
    raise ConfigError(where, f"unsupported type {typ!r}")


def _field_types(cls):
    # annotations are strings under ``from __future__ import annotations``
    names = {"int": int, "float": float, "bool": bool, "Mode": Mode}
    return {f.name: names[f.type] if isinstance(f.type, str) else f.type
            for f in dataclasses.fields(cls)}


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, f"malformed config file: {exc}") from None
    parts = {}
    for section in parser.sections():
        if section in PASSTHROUGH_SECTIONS:
            continue
        if section not in SECTIONS:
            raise ConfigError(section, "unknown config section")
        cls = SECTIONS[section]
        types = _field_types(cls)
        values = {}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"{section}.{key}", "unknown config key")
            values[key] = _parse_value(section, key, raw, types[key])
        parts[section] = cls(**values)
    return SimConfig(**parts)


def dump_config(cfg, extra=None):
    """Serialise every field (defaults expanded) back to the file format."""
    out = io.StringIO()
    for name in SECTIONS:
        part = getattr(cfg, name)
        out.write(f"[{name}]\n")
        for f in dataclasses.fields(part):
            value = getattr(part, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, Mode):
                value = value.value
            elif isinstance(value, float):
                value = repr(value)
            out.write(f"{f.name} = {value}\n")
        out.write("\n")
    if extra:
        for section, items in extra.items():
            out.write(f"[{section}]\n")
            for key, value in items.items():
                out.write(f"{key} = {value}\n")
            out.write("\n")
    return out.getvalue()


def bundled_names():
    root = resources.files("swlv") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_config(name_or_path):
    """Load a bundled config by name (``fig3a-desk``) or a config file path."""
    path = Path(name_or_path)
    if path.suffix and path.exists():
        return parse_config(path.read_text(), source=str(path))
    if path.exists() and path.is_file():
        return parse_config(path.read_text(), source=str(path))
    res = resources.files("swlv") / "configs" / f"{name_or_path}.ini"
    if res.is_file():
        return parse_config(res.read_text(), source=str(name_or_path))
    raise ConfigError("config", f"no such config file or bundled config: {name_or_path!r}")
