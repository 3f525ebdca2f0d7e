"""Experiment configuration files: schema, validation, snapshots and hashing.

A config is a TOML file with a root ``seed`` and the sections ``synth``,
``train``, ``augment``, ``graph``, ``experiment`` and ``acceptance``.  Every
key is optional; unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .augment import AugmentConfig
from .errors import ConfigError, GateError
from .evaluation import METHODS
from .graph import GraphConfig
from .signal import WindowSpec
from .synth import SynthConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class ExperimentConfig:
    rates: tuple[float, ...] = (0.1, 0.2, 0.8)
    methods: tuple[str, ...] = METHODS
    n_folds: int = 5
    n_repeats: int = 5
    ssl_scope: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "methods", tuple(self.methods))
        for r in self.rates:
            if not 0.0 < r <= 1.0:
                raise ConfigError(f"rates must lie in (0, 1], got {r}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"methods must be drawn from {METHODS}, got {m!r}")
        if self.n_folds < 2 or self.n_repeats < 1:
            raise ConfigError(f"need n_folds >= 2 and n_repeats >= 1, got {self.n_folds}, {self.n_repeats}")
        if self.ssl_scope not in ("train", "all"):
            raise ConfigError(f"ssl_scope must be 'train' or 'all', got {self.ssl_scope!r}")


@dataclass(frozen=True)
class AcceptanceConfig:
    """Which acceptance criteria ``run`` evaluates (empty: none)."""

    criteria: tuple[int, ...] = ()
    n_seeds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "criteria", tuple(int(c) for c in self.criteria))
        bad = [c for c in self.criteria if not 1 <= c <= 9]
        if bad:
            raise ConfigError(f"criteria must be numbered 1..9, got {bad}")
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be >= 1, got {self.n_seeds}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    acceptance: AcceptanceConfig = field(default_factory=AcceptanceConfig)

    def hash(self) -> str:
        return config_hash(self)


# keys of each section; augment flattens its WindowSpec into window_length / window_step
_TRAIN_KEYS = ("ssl_epochs", "ft_epochs", "lr", "weight_decay", "gamma", "hidden", "label_rate")
_AUGMENT_KEYS = ("mode", "drop", "window_length", "window_step", "ma_lengths", "drop_feature_prob",
                 "drop_edge_prob", "freeze", "max_retries")
_SYNTH_KEYS = tuple(f.name for f in dataclasses.fields(SynthConfig) if f.name != "seed")
_GRAPH_KEYS = tuple(f.name for f in dataclasses.fields(GraphConfig))
_EXPERIMENT_KEYS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))
_ACCEPTANCE_KEYS = tuple(f.name for f in dataclasses.fields(AcceptanceConfig))
SCHEMA = {
    "synth": _SYNTH_KEYS,
    "train": _TRAIN_KEYS,
    "augment": _AUGMENT_KEYS,
    "graph": _GRAPH_KEYS,
    "experiment": _EXPERIMENT_KEYS,
    "acceptance": _ACCEPTANCE_KEYS,
}


def resolved(config: RunConfig) -> dict[str, Any]:
    """Nested plain-data view with every default materialized."""
    aug = config.train.augment
    return {
        "seed": config.seed,
        "synth": {k: _plain(getattr(config.synth, k)) for k in _SYNTH_KEYS},
        "train": {k: getattr(config.train, k) for k in _TRAIN_KEYS},
        "augment": {
            "mode": aug.mode, "drop": aug.drop,
            "window_length": aug.window.length, "window_step": aug.window.step,
            "ma_lengths": list(aug.ma_lengths), "drop_feature_prob": aug.drop_feature_prob,
            "drop_edge_prob": aug.drop_edge_prob, "freeze": aug.freeze, "max_retries": aug.max_retries,
        },
        "graph": {k: _plain(getattr(config.train.graph, k)) for k in _GRAPH_KEYS},
        "experiment": {k: _plain(getattr(config.experiment, k)) for k in _EXPERIMENT_KEYS},
        "acceptance": {k: _plain(getattr(config.acceptance, k)) for k in _ACCEPTANCE_KEYS},
    }


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


def config_hash(config: RunConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical resolved config."""
    blob = json.dumps(resolved(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_type(where: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, (tuple, list)):
        ok = isinstance(value, (tuple, list))
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where} = {value!r}: expected {type(default).__name__}")


def _section(raw: Mapping[str, Any], name: str, defaults: Mapping[str, Any]) -> dict[str, Any]:
    table = raw.get(name, {})
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    out = dict(defaults)
    for key, value in table.items():
        if key not in SCHEMA[name]:
            raise ConfigError(f"unknown key {name}.{key} (allowed: {', '.join(SCHEMA[name])})")
        if name == "graph" and key == "sigma":
            out[key] = value
            continue
        _check_type(f"{name}.{key}", value, defaults[key])
        out[key] = value
    return out


def _build(name: str, factory, kwargs: dict[str, Any]):
    try:
        return factory(**kwargs)
    except GateError as exc:
        bad = [f"{name}.{k} = {kwargs[k]!r}" for k in kwargs if k in str(exc)]
        prefix = bad[0] if bad else f"[{name}]"
        raise ConfigError(f"{prefix}: {exc}") from None


def from_dict(raw: Mapping[str, Any], seed: int | None = None) -> RunConfig:
    """Validate a parsed config; ``seed`` overrides the file's root seed."""
    unknown = [k for k in raw if k != "seed" and k not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]} (allowed: seed, {', '.join(SCHEMA)})")
    root_seed = raw.get("seed", 0) if seed is None else seed
    _check_type("seed", root_seed, 0)

    defaults = resolved(RunConfig())
    synth_kw = _section(raw, "synth", defaults["synth"])
    train_kw = _section(raw, "train", defaults["train"])
    aug_kw = _section(raw, "augment", defaults["augment"])
    graph_kw = _section(raw, "graph", defaults["graph"])
    exp_kw = _section(raw, "experiment", defaults["experiment"])
    acc_kw = _section(raw, "acceptance", defaults["acceptance"])

    window = _build("augment", WindowSpec, {"length": aug_kw.pop("window_length"),
                                            "step": aug_kw.pop("window_step")})
    augment = _build("augment", AugmentConfig, {**aug_kw, "window": window})
    graph = _build("graph", GraphConfig, graph_kw)
    train = _build("train", TrainConfig, {**train_kw, "seed": root_seed, "augment": augment, "graph": graph})
    synth = _build("synth", SynthConfig, {**synth_kw, "seed": root_seed})
    experiment = _build("experiment", ExperimentConfig, exp_kw)
    acceptance = _build("acceptance", AcceptanceConfig, acc_kw)
    return RunConfig(root_seed, synth, train, experiment, acceptance)


def load_config(path: str | Path | None = None, seed: int | None = None) -> RunConfig:
    """Read and validate a TOML config; ``None`` gives the defaults."""
    if path is None:
        return from_dict({}, seed)
    try:
        with Path(path).open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw, seed)


def write_snapshot(config: RunConfig, path: str | Path) -> Path:
    """Resolved config as TOML, reloadable with :func:`load_config`."""
    path = Path(path)
    header = f"# config_hash = {config_hash(config)}\n"
    path.write_text(header + tomli_w.dumps(resolved(config)))
    return path


def bundled_config(name: str = "acceptance.toml") -> Path:
    return Path(__file__).parent / "configs" / name
