"""Run configuration: one YAML (or JSON) file, with command-line overrides."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .data import SYNTH_SCHEMA, ColumnRole, WindowConfig
from .errors import ConfigError
from .network import ModelConfig, SkipStrategy, layer_widths
from .training import TrainConfig


class ConfigParseError(ConfigError):
    """The configuration file could not be read or does not validate."""


@dataclass
class SynthSpec:
    T: int = 3000
    noise_scale: float = 0.1
    seed: int = 0


@dataclass
class DataSpec:
    path: Optional[str] = None
    synth: Optional[SynthSpec] = None
    schema: dict[str, str] = field(default_factory=dict)
    train_fraction: float = 0.8

    def validate(self):
        if (self.path is None) == (self.synth is None):
            raise ConfigError("data needs exactly one of 'path' or 'synth'")
        if self.synth is not None and not self.schema:
            self.schema = dict(SYNTH_SCHEMA)
        if not self.schema:
            raise ConfigError("data.schema is required with a data path")
        for name, role in self.schema.items():
            self.schema[name] = ColumnRole.parse(role).value
        if not 0 < self.train_fraction < 1:
            raise ConfigError("data.train_fraction must be in (0, 1)")


@dataclass
class ModelSpec:
    cnn_filters: Optional[list[int]] = None
    rnn_units: Optional[list[int]] = None
    layers: int = 4
    width_divisor: int = 1
    kernel_size: int = 3
    skip: str = "ltoinput"
    conv_activation: str = "relu"

    def widths(self) -> tuple[list[int], list[int]]:
        if self.cnn_filters is not None and self.rnn_units is not None:
            return list(self.cnn_filters), list(self.rnn_units)
        return layer_widths(self.layers, self.width_divisor)

    def model_config(self, w: int, k: int, n_targets: int, d_fused: int) -> ModelConfig:
        filters, units = self.widths()
        return ModelConfig(w=w, k=k, n_targets=n_targets, d_fused=d_fused,
                           cnn_filters=filters, rnn_units=units, kernel_size=self.kernel_size,
                           skip=self.skip, conv_activation=self.conv_activation)


@dataclass
class SweepSection:
    param: str = "shift"
    values: list = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])


@dataclass
class RunConfig:
    data: DataSpec
    window: WindowConfig
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: Optional[SweepSection] = None
    seed: int = 0
    deterministic: bool = True
    out: str = "run"

    def to_dict(self) -> dict:
        d = asdict(self)
        filters, units = self.model.widths()
        d["model"]["cnn_filters"] = filters
        d["model"]["rnn_units"] = units
        d["model"]["layers"] = len(filters)
        d["model"]["skip"] = SkipStrategy.parse(self.model.skip).value
        return d

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def copy(self) -> "RunConfig":
        return copy.deepcopy(self)


def _build(cls, raw: Any, where: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigParseError(f"section {where!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigParseError(f"unknown keys in {where!r}: {unknown}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid {where!r}: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigParseError("configuration must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigParseError(f"unknown top-level keys: {unknown}")
    if "data" not in raw or "window" not in raw:
        raise ConfigParseError("configuration needs 'data' and 'window' sections")
    data_raw = dict(raw["data"] or {})
    if data_raw.get("synth") is not None:
        data_raw["synth"] = _build(SynthSpec, data_raw["synth"], "data.synth")
    data = _build(DataSpec, data_raw, "data")
    window = _build(WindowConfig, raw["window"], "window")
    model = _build(ModelSpec, raw.get("model"), "model")
    train = _build(TrainConfig, raw.get("train"), "train")
    sweep = _build(SweepSection, raw["sweep"], "sweep") if raw.get("sweep") is not None else None
    try:
        run = RunConfig(data=data, window=window, model=model, train=train, sweep=sweep,
                        seed=int(raw.get("seed", 0)), deterministic=bool(raw.get("deterministic", True)),
                        out=str(raw.get("out", "run")))
        validate(run)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(str(exc)) from exc
    return run


def validate(run: RunConfig) -> None:
    run.data.validate()
    SkipStrategy.parse(run.model.skip)
    run.model.widths()
    run.train.seed = run.seed


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"malformed config {path}: {exc}") from exc
    run = config_from_dict(raw)
    if run.data.path is not None and not Path(run.data.path).is_absolute():
        candidate = path.parent / run.data.path
        if candidate.exists():
            run.data.path = str(candidate)
    return run


def apply_overrides(run: RunConfig, *, seed=None, deterministic=None, out=None, shift=None,
                    layers=None, skip=None) -> RunConfig:
    """Return a copy of ``run`` with command-line overrides applied and re-validated."""
    run = run.copy()
    if seed is not None:
        run.seed = int(seed)
    if deterministic is not None:
        run.deterministic = bool(deterministic)
    if out is not None:
        run.out = str(out)
    if shift is not None:
        run.window = WindowConfig(run.window.w, run.window.k, int(shift))
    if layers is not None:
        run.model.layers = int(layers)
        run.model.cnn_filters = None
        run.model.rnn_units = None
    if skip is not None:
        run.model.skip = SkipStrategy.parse(skip).value
    validate(run)
    return run
