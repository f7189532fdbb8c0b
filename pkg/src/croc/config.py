"""Versioned JSON configuration with defaults and key=value overrides.

One document with optional sections: ``train`` (hyperparameters and ablation
switches), ``synth`` (generator settings), ``data`` (input file paths). Unset
fields fall back to the library defaults. Overrides take ``section.key=value``
or bare ``key=value`` (resolved against train, then synth); values parse as
JSON literals where possible.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .synth import SynthConfig
from .train import TrainConfig

SCHEMA_VERSION = 1
_SECTIONS = ("train", "synth", "data")
_DATA_KEYS = {"edges", "features", "labels"}


@dataclass
class ResolvedConfig:
    train: TrainConfig
    synth: SynthConfig
    data: dict | None
    version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "train": self.train.to_dict(),
            "synth": self.synth.to_dict(),
            "data": self.data,
        }


def _coerce(section: str, key: str, value, default):
    """Check an incoming value against the default's type, converting where safe."""
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _apply_section(section: str, cls, incoming: dict) -> dict:
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    out = {}
    for key, value in incoming.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {section}.{key}")
        out[key] = _coerce(section, key, value, defaults[key])
    return out


def _parse_override(raw: str):
    if "=" not in raw:
        raise ConfigError(f"override {raw!r} must look like key=value")
    key, value = raw.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip(), parsed


def parse_config(path=None, overrides=(), seed=None) -> ResolvedConfig:
    """Load, override, validate. An absent or empty document yields all defaults."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for key in doc:
        if key not in (*_SECTIONS, "version"):
            raise ConfigError(f"unknown top-level config key {key!r}")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {version}")

    train_doc = dict(doc.get("train", {}))
    synth_doc = dict(doc.get("synth", {}))
    data_doc = doc.get("data")
    if data_doc is not None:
        if not isinstance(data_doc, dict) or not set(data_doc) <= _DATA_KEYS:
            raise ConfigError(f"data section accepts keys {sorted(_DATA_KEYS)}")

    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    synth_fields = {f.name for f in dataclasses.fields(SynthConfig)}
    for raw in overrides:
        key, value = _parse_override(raw)
        if "." in key:
            section, name = key.split(".", 1)
            if section == "train":
                train_doc[name] = value
            elif section == "synth":
                synth_doc[name] = value
            elif section == "data":
                if data_doc is None:
                    data_doc = {}
                data_doc[name] = value
            else:
                raise ConfigError(f"unknown config section {section!r} in override {raw!r}")
        elif key in train_fields:
            train_doc[key] = value
        elif key in synth_fields:
            synth_doc[key] = value
        else:
            raise ConfigError(f"override key {key!r} matches no config field")

    if seed is not None:
        train_doc["seed"] = int(seed)
        synth_doc["seed"] = int(seed)

    train_kwargs = _apply_section("train", TrainConfig, train_doc)
    synth_kwargs = _apply_section("synth", SynthConfig, synth_doc)
    train = TrainConfig(**train_kwargs)
    synth = SynthConfig(**synth_kwargs)
    train.validate()
    synth.validate()
    return ResolvedConfig(train=train, synth=synth, data=data_doc, version=version)


def resolve_data_paths(data: dict, base: Path) -> dict:
    """Make the data section's paths absolute relative to the config location."""
    out = {}
    for key, value in data.items():
        if key == "edges":
            out[key] = [str((base / p).resolve()) for p in value]
        else:
            out[key] = str((base / value).resolve())
    return out
