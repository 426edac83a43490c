"""Flat experiment configuration shared by the CLI and the harnesses.

Configs live in JSON files with one flat object.  Unknown keys are
rejected so typos fail fast; every value is validated by the owning
sub-config before any work starts.  Precedence is flag > file > default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields

from .cascade import PropagationConfig
from .encoding import EncodingConfig
from .model import ModelConfig
from .training import TrainConfig
from .util import round_half_up

DEFAULT_THETA_GRID = (0.10, 0.15, 0.20, 0.25, 0.30)
DEFAULT_DELTA_GRID = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)


class ConfigError(ValueError):
    """Configuration file or override is invalid."""


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    dataset: str = "builtin:football115"
    delimiter: str | None = None
    num_samples: int = 100
    split: float = 0.8
    # propagation
    source_fraction: float = 0.05
    p_low: float = 0.1
    p_high: float = 0.5
    theta: float = 0.3
    delta: float = 0.1
    max_retries: int = 20
    exclude_sources_from_mask: bool = False
    # encoding
    k: int = 16
    raw_timestamps: bool = False
    extended_features: bool = False
    # model
    num_layers: int = 3
    heads: int = 4
    hidden_width: int = 800
    lrelu_slope: float = 0.2
    attention_variant: str = "learned"
    self_loops_in_attention: bool = True
    # training
    learning_rate: float = 1e-3
    l2_lambda: float = 5e-4
    l2_literal_norm: bool = False
    epochs: int = 200
    patience: int = 25
    class_balance: bool = True
    threshold: float = 0.5
    threshold_mode: str = "fixed"
    predict_mode: str = "threshold"
    val_fraction: float = 0.125
    train_dtype: str = "float64"
    # sweeps
    theta_grid: tuple[float, ...] = DEFAULT_THETA_GRID
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    # bookkeeping
    out_dir: str = "runs/default"
    seed: int = 0

    def __post_init__(self) -> None:
        # build sub-configs eagerly so every field is range-checked up front
        try:
            self.propagation_config()
            self.encoding_config()
            self.model_config()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.num_samples < 5:
            raise ConfigError("num_samples must be >= 5")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("split must lie in (0, 1)")
        for name in ("theta_grid", "delta_grid"):
            grid = getattr(self, name)
            if not grid:
                raise ConfigError(f"{name} must be non-empty")

    def propagation_config(self) -> PropagationConfig:
        return PropagationConfig(
            source_fraction=self.source_fraction,
            p_low=self.p_low,
            p_high=self.p_high,
            theta=self.theta,
            delta=self.delta,
            max_retries=self.max_retries,
            exclude_sources_from_mask=self.exclude_sources_from_mask,
            seed=self.seed,
        )

    def encoding_config(self) -> EncodingConfig:
        return EncodingConfig(
            k=self.k,
            raw_timestamps=self.raw_timestamps,
            extended=self.extended_features,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            input_width=self.encoding_config().width,
            num_layers=self.num_layers,
            heads=self.heads,
            hidden_width=self.hidden_width,
            lrelu_slope=self.lrelu_slope,
            attention_variant=self.attention_variant,
            self_loops_in_attention=self.self_loops_in_attention,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            l2_lambda=self.l2_lambda,
            l2_literal_norm=self.l2_literal_norm,
            epochs=self.epochs,
            patience=self.patience,
            class_balance=self.class_balance,
            threshold=self.threshold,
            threshold_mode=self.threshold_mode,
            predict_mode=self.predict_mode,
            val_fraction=self.val_fraction,
            dtype=self.train_dtype,
            seed=self.seed,
        )

    def source_count(self, n: int) -> int:
        """Generated source-set size for an n-node graph."""
        return max(1, round_half_up(self.source_fraction * n))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def short_hash(self) -> str:
        return self.config_hash[:12]


_BOOL_STRINGS = {
    "true": True,
    "1": True,
    "yes": True,
    "false": False,
    "0": False,
    "no": False,
}


def _cast_value(name: str, expected, raw):
    """Coerce a JSON or override value to the field's declared type."""
    if expected == "str":
        if not isinstance(raw, str):
            raise ConfigError(f"{name}: expected string, got {type(raw).__name__}")
        return raw
    if expected == "opt_str":
        if raw is None or isinstance(raw, str):
            return raw
        raise ConfigError(f"{name}: expected string or null")
    if expected == "bool":
        if isinstance(raw, bool):
            return raw
        raise ConfigError(f"{name}: expected boolean")
    if expected == "int":
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"{name}: expected integer")
        return raw
    if expected == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{name}: expected number")
        return float(raw)
    if expected == "float_tuple":
        if not isinstance(raw, (list, tuple)) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw
        ):
            raise ConfigError(f"{name}: expected a list of numbers")
        return tuple(float(v) for v in raw)
    raise AssertionError(f"unhandled field kind {expected}")


_FIELD_KINDS: dict[str, str] = {
    "dataset": "str",
    "delimiter": "opt_str",
    "num_samples": "int",
    "split": "float",
    "source_fraction": "float",
    "p_low": "float",
    "p_high": "float",
    "theta": "float",
    "delta": "float",
    "max_retries": "int",
    "exclude_sources_from_mask": "bool",
    "k": "int",
    "raw_timestamps": "bool",
    "extended_features": "bool",
    "num_layers": "int",
    "heads": "int",
    "hidden_width": "int",
    "lrelu_slope": "float",
    "attention_variant": "str",
    "self_loops_in_attention": "bool",
    "learning_rate": "float",
    "l2_lambda": "float",
    "l2_literal_norm": "bool",
    "epochs": "int",
    "patience": "int",
    "class_balance": "bool",
    "threshold": "float",
    "threshold_mode": "str",
    "predict_mode": "str",
    "val_fraction": "float",
    "train_dtype": "str",
    "theta_grid": "float_tuple",
    "delta_grid": "float_tuple",
    "out_dir": "str",
    "seed": "int",
}

assert set(_FIELD_KINDS) == {f.name for f in fields(ExperimentConfig)}


def config_from_dict(data: dict, source: str = "config") -> ExperimentConfig:
    """Validate a flat mapping and build an ExperimentConfig."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    unknown = set(data) - set(_FIELD_KINDS)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    kwargs = {
        name: _cast_value(name, _FIELD_KINDS[name], raw)
        for name, raw in data.items()
    }
    return ExperimentConfig(**kwargs)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data, source=path)


def _parse_override_token(name: str, kind: str, token: str):
    """Parse a --set VALUE string according to the field's kind."""
    if kind == "str":
        return token
    if kind == "opt_str":
        return None if token.lower() in ("none", "null") else token
    if kind == "bool":
        low = token.lower()
        if low not in _BOOL_STRINGS:
            raise ConfigError(f"{name}: cannot parse boolean from {token!r}")
        return _BOOL_STRINGS[low]
    if kind == "int":
        try:
            return int(token)
        except ValueError as exc:
            raise ConfigError(f"{name}: cannot parse integer from {token!r}") from exc
    if kind == "float":
        try:
            return float(token)
        except ValueError as exc:
            raise ConfigError(f"{name}: cannot parse number from {token!r}") from exc
    if kind == "float_tuple":
        try:
            parsed = json.loads(token)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{name}: cannot parse list from {token!r}") from exc
        return _cast_value(name, kind, parsed)
    raise AssertionError(f"unhandled field kind {kind}")


def apply_overrides(
    config: ExperimentConfig, overrides: dict[str, str]
) -> ExperimentConfig:
    """Apply string overrides (flag > file > default precedence)."""
    updates = {}
    for name, token in overrides.items():
        if name not in _FIELD_KINDS:
            raise ConfigError(f"unknown config key {name!r}")
        updates[name] = _parse_override_token(name, _FIELD_KINDS[name], token)
    try:
        return dataclasses.replace(config, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
