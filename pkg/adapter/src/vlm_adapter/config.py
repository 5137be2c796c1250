"""Flat ``key = value`` adapter configuration.

Key conventions deliberately mirror the hybridoc engine CLI: one flat
file configures everything, unknown keys are rejected with the offending
line number, ``VLM_ADAPTER_CONFIG`` names the default file, and every
key doubles as a ``--<key> <value>`` flag.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Any, Callable

__all__ = ["AdapterConfig", "AdapterError", "CONFIG_ENV_VAR", "CONFIG_KEYS",
           "MIN_LOGIT_CAP", "MODES", "PROMPT_PRESETS", "load_config"]

CONFIG_ENV_VAR = "VLM_ADAPTER_CONFIG"

# Embedding prompts that have proven useful; "compression" is the
# default because the one-word constraint concentrates the logit mass
# into few, highly discriminative tokens.
PROMPT_PRESETS = {
    "compression": "Represent this document in one word:",
    "keyword": "What are the keywords of this document?",
    "descriptive": "Describe the content of this image:",
    "summarization": "Summarize this page:",
}

MODES = ("single", "multi")
MIN_LOGIT_CAP = 256


class AdapterError(ValueError):
    """Bad configuration or input the adapter cannot recover from."""

    def __init__(self, message: str, path: str | os.PathLike[str] | None = None,
                 line: int | None = None):
        prefix = ""
        if path is not None:
            prefix = str(path)
            if line is not None:
                prefix += f":{line}"
            prefix += ": "
        super().__init__(prefix + message)
        self.path = None if path is None else str(path)
        self.line = line


@dataclass
class AdapterConfig:
    """Everything an export run needs to know about the model side.

    ``raw_logit_cap`` bounds how many (token, logit) pairs survive per
    chunk; it must stay well above the engine's final sparse budget so
    lemma merging and stopword filtering have headroom to work with.
    """

    model: str = "mock"
    prompt: str = PROMPT_PRESETS["compression"]
    mode: str = "single"
    raw_logit_cap: int = 2048
    batch_size: int = 8
    device: str = "auto"

    def validate(self) -> None:
        if not self.model:
            raise AdapterError("model must be non-empty")
        if not self.prompt:
            raise AdapterError("prompt must be non-empty")
        if self.mode not in MODES:
            raise AdapterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.raw_logit_cap < MIN_LOGIT_CAP:
            raise AdapterError(
                f"raw_logit_cap must be >= {MIN_LOGIT_CAP}, got "
                f"{self.raw_logit_cap}")
        if self.batch_size < 1:
            raise AdapterError(f"batch_size must be >= 1, got {self.batch_size}")


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_str(text: str) -> str:
    return text


def resolve_preset(name: str) -> str:
    preset = PROMPT_PRESETS.get(name)
    if preset is None:
        raise ValueError(
            f"unknown prompt preset {name!r}; choose from "
            f"{sorted(PROMPT_PRESETS)}")
    return preset


# Config-file key -> (AdapterConfig attribute, parser).  "prompt.preset"
# resolves straight into the prompt attribute, so file order (or flag
# precedence) decides between a preset and a literal prompt string.
CONFIG_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "model": ("model", _parse_str),
    "prompt": ("prompt", _parse_str),
    "prompt.preset": ("prompt", resolve_preset),
    "mode": ("mode", _parse_str),
    "raw_logit_cap": ("raw_logit_cap", _parse_int),
    "batch_size": ("batch_size", _parse_int),
    "device": ("device", _parse_str),
}


def parse_config_file(path: str | os.PathLike[str]) -> dict[str, Any]:
    """Read ``key = value`` lines into attribute/value pairs."""
    overrides: dict[str, Any] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise AdapterError("expected 'key = value'", path, lineno)
            key, _, value = (part.strip() for part in line.partition("="))
            spec = CONFIG_KEYS.get(key)
            if spec is None:
                raise AdapterError(f"unknown config key {key!r}", path, lineno)
            attr, parser = spec
            try:
                overrides[attr] = parser(value)
            except ValueError as exc:
                raise AdapterError(f"bad value for {key!r}: {exc}",
                                   path, lineno) from exc
    return overrides


def load_config(path: str | os.PathLike[str] | None = None,
                overrides: dict[str, Any] | None = None) -> AdapterConfig:
    """Defaults, then the config file (explicit path or the environment
    variable), then per-invocation overrides; validated at the end."""
    if path is None:
        env_path = os.environ.get(CONFIG_ENV_VAR)
        path = env_path if env_path else None
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_file(path))
    if overrides:
        valid = {f.name for f in fields(AdapterConfig)}
        unknown = set(overrides) - valid
        if unknown:
            raise AdapterError(f"unknown config attributes: {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = AdapterConfig(**values)
    cfg.validate()
    return cfg
