"""
Run configuration.

Configuration files are flat ``key = value`` lines with ``#`` comments. Keys
are the field names of ``FitConfig`` / ``SpaceConfig`` plus the loss weights
(``lambda_surface``, ``beta_point_to_plane``, ...). Command-line flags
override file values, and the seed falls back to ``NPS_SEED``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from django.conf import settings

from surfaces.exceptions import ConfigError
from surfaces.losses import LossWeights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Single-shape fitting run."""

    iterations: int = 2000
    batch_points: int = 10_000
    warmup_iters: int = 100
    fair_decay_start: int = 300
    fair_decay_span: int = 300
    fair_decay_floor: float = 0.01
    lr_init: float = 1e-3
    lr_final: float = 1e-5
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    feature_dim: int = 128
    layers: int = 12
    hidden: int = 256
    samples_per_edge: int = 32
    boundary_eps: float = 1e-4
    fair_samples: int = 16
    anchored_complex: bool = False
    deterministic: bool = False
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.warmup_iters < 0 or self.warmup_iters >= self.fair_decay_start:
            raise ValueError("warmup_iters must be non-negative and smaller than fair_decay_start")
        if self.lr_init <= 0.0 or not 0.0 < self.lr_final <= self.lr_init:
            raise ValueError("learning rates must satisfy 0 < lr_final <= lr_init")
        if self.fair_decay_span < 1 or not 0.0 < self.fair_decay_floor <= 1.0:
            raise ValueError("fair decay needs a positive span and a floor in (0, 1]")
        _check_shared(self)


@dataclass(frozen=True)
class SpaceConfig:
    """Shape-space training run."""

    epochs: int = 100
    batch_shapes: int = 24
    points_per_shape: int = 5000
    lr: float = 1e-3
    lr_final_phase: float = 5e-4
    final_phase_epochs: int = 20
    warmup_iters: int = 100
    latent_dim: int = 64
    decoder_hidden: int = 256
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    feature_dim: int = 128
    layers: int = 12
    hidden: int = 256
    samples_per_edge: int = 32
    boundary_eps: float = 1e-4
    fair_samples: int = 16
    anchored_complex: bool = False
    deterministic: bool = False
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_shapes < 1 or self.points_per_shape < 1:
            raise ValueError("epochs, batch_shapes and points_per_shape must be positive")
        if self.lr <= 0.0 or self.lr_final_phase <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.warmup_iters < 0 or self.final_phase_epochs < 0 or self.latent_dim < 1:
            raise ValueError("warmup_iters and final_phase_epochs must be non-negative, latent_dim positive")
        if self.decoder_hidden < 1:
            raise ValueError("decoder_hidden must be positive")
        if self.anchored_complex:
            raise ValueError("the anchored complex is a single-shape variant")
        _check_shared(self)


def _check_shared(config: FitConfig | SpaceConfig) -> None:
    if config.layers < 1 or config.hidden < 1:
        raise ValueError("layers and hidden must be positive")
    if not config.anchored_complex and config.feature_dim < 2:
        raise ValueError("feature_dim must be at least 2")
    if config.samples_per_edge < 1 or config.fair_samples < 3:
        raise ValueError("samples_per_edge must be positive and fair_samples at least 3")
    if config.boundary_eps <= 0.0:
        raise ValueError("boundary_eps must be positive")
    if config.threads is not None and config.threads < 1:
        raise ValueError("threads must be positive")


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw ``key -> value`` strings of a flat config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"could not read config {path}: {exc}") from exc
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "none") else int(text)


PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "int | None": _parse_optional_int,
}


def _coerce(key: str, kind: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    try:
        return PARSERS[kind](value)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key}: {value!r}") from exc


def build_config(cls: type, values: dict[str, Any] | None = None, **overrides: Any):
    """
    Instantiate ``cls`` (FitConfig or SpaceConfig) from file values and overrides.

    Overrides that are None are ignored, so unset command-line flags fall
    through to the file and then to the defaults.
    """
    merged = {**(values or {}), **{k: v for k, v in overrides.items() if v is not None}}
    config_fields = {f.name: f.type for f in fields(cls) if f.name != "weights"}
    weight_fields = {f.name: f.type for f in fields(LossWeights)}

    kwargs: dict[str, Any] = {}
    weight_kwargs: dict[str, Any] = {}
    for key, value in merged.items():
        if key in config_fields:
            kwargs[key] = _coerce(key, config_fields[key], value)
        elif key in weight_fields:
            weight_kwargs[key] = _coerce(key, weight_fields[key], value)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    if "seed" not in kwargs:
        kwargs["seed"] = settings.NPS_SEED
    if kwargs.get("threads") is None and settings.NPS_THREADS is not None:
        kwargs["threads"] = settings.NPS_THREADS
    if kwargs.get("threads") == 1:
        kwargs["deterministic"] = True
    try:
        return cls(weights=LossWeights(**weight_kwargs), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(cls: type, path: str | Path | None = None, **overrides: Any):
    values = read_config_file(path) if path else {}
    config = build_config(cls, values, **overrides)
    logger.debug("resolved %s: %s", cls.__name__, config)
    return config


def config_to_dict(config: FitConfig | SpaceConfig) -> dict:
    """Plain JSON-ready echo of a config for checkpoint headers."""
    return asdict(config)
