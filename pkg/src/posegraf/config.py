"""Flat ``key = value`` run configuration with full-size defaults and a desk-scale profile."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .model import ConfigError, ModelConfig
from .skeleton import SkeletonTopology, h36m_topology, load_topology
from .train import TrainSettings

PROFILES = {
    "full": {},
    "desk": {"layers": 2, "heads": 2, "dim": 64},
}

_MODEL_KEYS = {f.name: f for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name: f for f in fields(TrainSettings)}
_RUN_KEYS = {"profile", "topology"}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    profile: str = "full"
    topology: str = "h36m"

    def load_topology(self, base_dir: Path | None = None) -> SkeletonTopology:
        if self.topology == "h36m":
            return h36m_topology()
        path = Path(self.topology)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_topology(path)

    def to_dict(self) -> dict:
        return {"profile": self.profile, "topology": self.topology,
                "model": self.model.to_dict(), "train": self.train.to_dict()}


def _parse_value(raw: str):
    v = raw.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    low = v.lower()
    # "off" stays a string: it is a fusion_mode value
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    return str(value)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def build_config(values: dict) -> RunConfig:
    """Apply profile, then explicit keys, on top of the full-size defaults."""
    unknown = set(values) - set(_MODEL_KEYS) - set(_TRAIN_KEYS) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    profile = str(values.get("profile", "full"))
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (choose from {sorted(PROFILES)})")
    model_kw = dict(PROFILES[profile])
    train_kw = {}
    defaults_m, defaults_t = ModelConfig(), TrainSettings()
    for k, v in values.items():
        if k in _MODEL_KEYS:
            model_kw[k] = _coerce(k, v, getattr(defaults_m, k))
        elif k in _TRAIN_KEYS:
            train_kw[k] = _coerce(k, v, getattr(defaults_t, k))
    model = replace(defaults_m, **model_kw).validate()
    train = replace(defaults_t, **train_kw)
    if train.epochs < 0 or train.batch_size < 1 or train.lr < 0:
        raise ConfigError("epochs must be >= 0, batch_size >= 1 and lr >= 0")
    return RunConfig(model, train, profile, str(values.get("topology", "h36m")))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(values)
