"""Experiment configuration: schema, loading, validation, seed derivation.

A config file is JSON or TOML with optional top-level keys plus three
sections, ``[train]``, ``[net]`` and ``[eval]``. Unknown keys are errors.
A run manifest (``manifest.json``) is also accepted as a config, so any
run can be repeated from its own record.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .env import SETTINGS, SettingSpec
from .trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Config schema or range violation; the message names the offending field."""


@dataclass
class ArchConfig:
    layers: int = 2
    d: int = 64
    d_h: int = 64
    heads: int = 4
    embed_dim: int = 16
    conv_hidden: int = 64


@dataclass
class EvalConfig:
    restarts: int = 100
    steps: int = 200
    lr: float = 0.01
    batch_size: int = 500
    # regret is estimated on the first ``regret_samples`` test samples; 0 means all of them
    regret_samples: int = 0


@dataclass
class ExperimentConfig:
    setting: str = "A"
    # 0 keeps the setting's own bidder / item count
    n: int = 0
    m: int = 0
    train_samples: int = 50_000
    test_samples: int = 5_000
    seed: int = 0
    label: str = ""
    out_dir: str = "runs"
    oos_bidders: list[int] = field(default_factory=list)
    oos_items: list[int] = field(default_factory=lambda: [3, 4, 5, 6, 7])
    oos_samples: int = 5_000
    # sizes of the prop-check suites
    prop_passes: int = 100_000
    prop_cases: int = 100
    train: TrainConfig = field(default_factory=TrainConfig)
    net: ArchConfig = field(default_factory=ArchConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def spec(self) -> SettingSpec:
        base = SETTINGS[self.setting]
        return base.resized(self.n or base.n, self.m or base.m)

    def validate(self) -> ExperimentConfig:
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting: unknown id {self.setting!r}; expected one of {sorted(SETTINGS)}")
        positive = {"train_samples": self.train_samples, "test_samples": self.test_samples,
                    "oos_samples": self.oos_samples, "prop_passes": self.prop_passes, "prop_cases": self.prop_cases,
                    "net.layers": self.net.layers, "net.d": self.net.d,
                    "net.d_h": self.net.d_h, "net.heads": self.net.heads, "net.embed_dim": self.net.embed_dim,
                    "net.conv_hidden": self.net.conv_hidden, "eval.restarts": self.eval.restarts,
                    "eval.batch_size": self.eval.batch_size}
        nonneg = {"n": self.n, "m": self.m, "eval.steps": self.eval.steps,
                  "eval.regret_samples": self.eval.regret_samples}
        for name, value in positive.items():
            if value < 1:
                raise ConfigError(f"{name}: must be >= 1, got {value}")
        for name, value in nonneg.items():
            if value < 0:
                raise ConfigError(f"{name}: must be >= 0, got {value}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: must fit in an unsigned 64-bit integer, got {self.seed}")
        if self.eval.lr <= 0:
            raise ConfigError(f"eval.lr: must be > 0, got {self.eval.lr}")
        if self.net.d != self.net.d_h:
            raise ConfigError(f"net.d_h: must equal net.d ({self.net.d}), got {self.net.d_h}")
        if self.net.d_h % self.net.heads:
            raise ConfigError(f"net.heads: must divide net.d_h ({self.net.d_h}), got {self.net.heads}")
        for name, sizes in (("oos_bidders", self.oos_bidders), ("oos_items", self.oos_items)):
            if any(s < 1 for s in sizes):
                raise ConfigError(f"{name}: sizes must be >= 1, got {sizes}")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc).replace("TrainConfig.", "train.")) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self)


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form of the config."""
    text = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def stream_seed(master: int, label: str) -> int:
    """Independent 63-bit seed for a named stream (data, init, misreports, eval, ...)."""
    digest = hashlib.blake2b(f"{master}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


STREAMS = ("train-data", "test-data", "init", "train", "eval")

# fields that determine a trained model; anything else (evaluation, sweeps, paths) can change freely
TRAINING_FIELDS = ("setting", "n", "m", "train_samples", "test_samples", "seed", "train", "net")


def training_key(config: ExperimentConfig | dict) -> str:
    """Hash over the fields that determine the trained parameters."""
    data = config if isinstance(config, dict) else config.to_dict()
    subset = {k: data[k] for k in TRAINING_FIELDS}
    subset["train"] = {k: v for k, v in subset["train"].items() if k != "seed"}
    return hashlib.sha256(json.dumps(subset, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def derive_seeds(master: int) -> dict[str, int]:
    return {name: stream_seed(master, name) for name in STREAMS}


# -- parsing -----------------------------------------------------------------

# keys that may not be set from a file because another field owns them
_RESERVED = {"train.seed": "the top-level seed drives every stream"}


def _check_type(name: str, hint, value):
    origin = typing.get_origin(hint)
    if origin is list:
        (item,) = typing.get_args(hint)
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {type(value).__name__}")
        return [_check_type(f"{name}[{k}]", item, v) for k, v in enumerate(value)]
    if hint is bool:
        ok = isinstance(value, bool)
    elif hint is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif hint is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif hint is str:
        ok = isinstance(value, str)
    else:
        raise ConfigError(f"{name}: unsupported field type {hint}")
    if not ok:
        raise ConfigError(f"{name}: expected {hint.__name__}, got {type(value).__name__} {value!r}")
    return value


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: expected a table of keys")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        full = prefix + key
        if key not in names:
            raise ConfigError(f"{full}: unknown key (allowed: {', '.join(sorted(names))})")
        if full in _RESERVED:
            raise ConfigError(f"{full}: not settable here; {_RESERVED[full]}")
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, full + ".")
        else:
            kwargs[key] = _check_type(full, hint, value)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    if "config" in data and "config_hash" in data:        # a run manifest
        data = data["config"]
        data = {**data, "train": {k: v for k, v in data.get("train", {}).items() if k != "seed"}}
    return _build(ExperimentConfig, data).validate()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from None
    return config_from_dict(data)
