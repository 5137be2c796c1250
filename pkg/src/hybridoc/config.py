"""Flat ``key = value`` engine configuration.

One file configures every stage; unknown keys are rejected so typos
fail loudly instead of silently running with defaults.  The environment
variable ``HYBRIDOC_CONFIG`` names the default config path, and any key
can be overridden per-invocation with a ``--<key> <value>`` CLI flag.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from typing import Any, Callable

from .model import DataError, SPARSE_MAX_ENTRIES

__all__ = ["CONFIG_ENV_VAR", "CONFIG_KEYS", "EngineConfig", "load_config"]

CONFIG_ENV_VAR = "HYBRIDOC_CONFIG"

STRATEGY_CHOICES = ("random", "difficult", "similar")


@dataclass
class EngineConfig:
    """Engine-wide knobs plus resource paths.

    ``channel_k`` left unset resolves to ``max(50, 2 * m)`` at retrieval
    time; ``lemma_map`` and ``stopwords`` left unset fall back to the
    reference tables shipped with the package.
    """

    dense_weight: float = 0.8          # key: lambda
    channel_k: int | None = None
    m: int = 30
    demo_k: int = 4
    selection_strategy: str = "similar"
    seed: int = 0
    lemma_map: str | None = None
    stopwords: str | None = None
    index: str | None = None
    demo_pool: str | None = None
    score_client: str | None = None
    synth_clients: str | None = None   # comma-separated endpoint specs
    sparsify_top_k: int = SPARSE_MAX_ENTRIES   # key: sparsify.top_k
    sparsify_scale: float = 100.0              # key: sparsify.scale

    def validate(self) -> None:
        if not (math.isfinite(self.dense_weight)
                and 0.0 <= self.dense_weight <= 1.0):
            raise DataError(f"lambda must be in [0, 1], got {self.dense_weight}")
        if self.m < 1:
            raise DataError(f"m must be >= 1, got {self.m}")
        if self.channel_k is not None and self.channel_k < self.m:
            raise DataError(
                f"channel_k ({self.channel_k}) must be >= m ({self.m})")
        if self.demo_k < 1:
            raise DataError(f"demo_k must be >= 1, got {self.demo_k}")
        if self.selection_strategy not in STRATEGY_CHOICES:
            raise DataError(
                f"selection_strategy must be one of {STRATEGY_CHOICES}, got "
                f"{self.selection_strategy!r}")
        if not 1 <= self.sparsify_top_k <= SPARSE_MAX_ENTRIES:
            raise DataError(
                f"sparsify.top_k must be in [1, {SPARSE_MAX_ENTRIES}], got "
                f"{self.sparsify_top_k}")
        if not (math.isfinite(self.sparsify_scale) and self.sparsify_scale > 0):
            raise DataError(
                f"sparsify.scale must be positive, got {self.sparsify_scale}")


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"must be finite, got {text!r}")
    return value


def _parse_str(text: str) -> str:
    return text


# Config-file key -> (EngineConfig attribute, parser).
CONFIG_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "lambda": ("dense_weight", _parse_float),
    "channel_k": ("channel_k", _parse_int),
    "m": ("m", _parse_int),
    "demo_k": ("demo_k", _parse_int),
    "selection_strategy": ("selection_strategy", _parse_str),
    "seed": ("seed", _parse_int),
    "lemma_map": ("lemma_map", _parse_str),
    "stopwords": ("stopwords", _parse_str),
    "index": ("index", _parse_str),
    "demo_pool": ("demo_pool", _parse_str),
    "score_client": ("score_client", _parse_str),
    "synth_clients": ("synth_clients", _parse_str),
    "sparsify.top_k": ("sparsify_top_k", _parse_int),
    "sparsify.scale": ("sparsify_scale", _parse_float),
}


def parse_config_file(path: str | os.PathLike[str]) -> dict[str, Any]:
    """Read ``key = value`` lines into attribute/value pairs.

    Blank lines and ``#`` comments are ignored; unknown keys and
    unparseable values abort with the offending line number.
    """
    overrides: dict[str, Any] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError("expected 'key = value'", path, lineno)
            key, _, value = (part.strip() for part in line.partition("="))
            spec = CONFIG_KEYS.get(key)
            if spec is None:
                raise DataError(f"unknown config key {key!r}", path, lineno)
            attr, parser = spec
            try:
                overrides[attr] = parser(value)
            except ValueError as exc:
                raise DataError(f"bad value for {key!r}: {exc}",
                                path, lineno) from exc
    return overrides


def load_config(path: str | os.PathLike[str] | None = None,
                overrides: dict[str, Any] | None = None) -> EngineConfig:
    """Defaults, then the config file (explicit path or $HYBRIDOC_CONFIG),
    then per-invocation overrides; validated at the end."""
    if path is None:
        env_path = os.environ.get(CONFIG_ENV_VAR)
        path = env_path if env_path else None
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_file(path))
    if overrides:
        valid = {f.name for f in fields(EngineConfig)}
        unknown = set(overrides) - valid
        if unknown:
            raise DataError(f"unknown config attributes: {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = EngineConfig(**values)
    cfg.validate()
    return cfg
