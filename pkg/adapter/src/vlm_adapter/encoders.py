"""Model backends: the protocol, the registry, and the mock.

A backend turns one page image (or one query string) into chunk
encodings: a dense vector plus a token->logit map per chunk.  Real
model backends register themselves via :func:`register_encoder`; the
bundled ``mock`` backend is pure-CPU, fully deterministic, and never
touches the network, so every test and CI job can run against it.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .config import AdapterConfig, AdapterError

__all__ = ["ChunkEncoding", "MockEncoder", "PageDecodeError", "PageEncoder",
           "load_encoder", "register_encoder"]


class PageDecodeError(RuntimeError):
    """A page image could not be read or decoded."""


@dataclass
class ChunkEncoding:
    vector: np.ndarray
    logits: dict[str, float]


class PageEncoder(Protocol):
    def encode_page(self, page: str | os.PathLike[str]) -> list[ChunkEncoding]:
        """Encode one page image; raise PageDecodeError if unreadable."""

    def encode_text(self, text: str) -> list[ChunkEncoding]:
        """Encode one query string."""


# ---------------------------------------------------------------------------
# Deterministic mock backend
# ---------------------------------------------------------------------------

MOCK_DIM = 32

# A small vocabulary of document-flavoured words.  Mostly content terms
# so engine-side stopword filtering leaves the records useful, plus a
# couple of function words because real LM heads leak those too.
MOCK_VOCAB = (
    "annual audit balance budget capital cashflow chart column contract "
    "credit customer dataset deadline dividend draft earnings equity "
    "estimate expense figure filing forecast growth heading income index "
    "inventory invoice ledger liability margin market memo merger metric "
    "notice outlook overview page paragraph payment pension percent plan "
    "policy portfolio price profit projection quarter quota rate ratio "
    "receipt record region report return revenue review risk row salary "
    "sales schedule section sector share sheet statement summary supply "
    "surplus table tariff tax template tenant term title total trade "
    "transfer trend valuation value vendor volume yield the of and"
).split()


def _digest_rng(*parts: bytes) -> np.random.Generator:
    digest = hashlib.sha256(b"\x00".join(parts)).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


class MockEncoder:
    """Hash-driven stand-in for a real vision-language model.

    Every output is a pure function of (prompt, mode, input content):
    re-running an export can never produce different bytes, and two
    different pages practically never collide.
    """

    def __init__(self, cfg: AdapterConfig):
        self.prompt = cfg.prompt
        self.mode = cfg.mode

    def _chunks(self, salt: bytes, payload: bytes) -> list[ChunkEncoding]:
        rng = _digest_rng(self.prompt.encode("utf-8"),
                         self.mode.encode("utf-8"), salt, payload)
        n_chunks = 1 if self.mode == "single" else 2 + int(rng.integers(0, 3))
        chunks = []
        for _ in range(n_chunks):
            vector = rng.standard_normal(MOCK_DIM)
            n_tokens = 12 + int(rng.integers(0, 20))
            picks = rng.choice(len(MOCK_VOCAB), size=n_tokens, replace=False)
            logits = {MOCK_VOCAB[i]: float(rng.uniform(0.2, 6.0))
                      for i in sorted(picks)}
            chunks.append(ChunkEncoding(vector, logits))
        return chunks

    def encode_page(self, page: str | os.PathLike[str]) -> list[ChunkEncoding]:
        try:
            payload = Path(page).read_bytes()
        except OSError as exc:
            raise PageDecodeError(f"cannot read page image: {exc}") from exc
        return self._chunks(b"page", payload)

    def encode_text(self, text: str) -> list[ChunkEncoding]:
        return self._chunks(b"query", text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Backend registry
# ---------------------------------------------------------------------------

ENCODER_FACTORIES: dict[str, Callable[[AdapterConfig], PageEncoder]] = {
    "mock": MockEncoder,
}


def register_encoder(name: str,
                     factory: Callable[[AdapterConfig], PageEncoder]) -> None:
    """Plug in a real model backend under ``name``."""
    if not name:
        raise ValueError("encoder name must be non-empty")
    ENCODER_FACTORIES[name] = factory


def load_encoder(cfg: AdapterConfig) -> PageEncoder:
    factory = ENCODER_FACTORIES.get(cfg.model)
    if factory is None:
        raise AdapterError(
            f"unknown model {cfg.model!r}: bundled backends are "
            f"{sorted(ENCODER_FACTORIES)}; install or register one via "
            f"register_encoder()")
    return factory(cfg)
