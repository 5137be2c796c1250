"""Shared helpers for the adapter tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from vlm_adapter.encoders import ChunkEncoding, PageDecodeError

FAKE_PNG = b"\x89PNG\r\n\x1a\n"


def make_pages(root: Path, count: int, suffix: str = ".png") -> list[Path]:
    """Write ``count`` distinct fake page images under ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    pages = []
    for i in range(count):
        page = root / f"page{i:02d}{suffix}"
        page.write_bytes(FAKE_PNG + f"payload-{i}".encode())
        pages.append(page)
    return pages


class StubEncoder:
    """Scripted backend: fixed chunk output per page stem / query text."""

    def __init__(self, script: dict[str, list[ChunkEncoding]],
                 default_dim: int = 4):
        self.script = script
        self.default_dim = default_dim

    def _lookup(self, key: str) -> list[ChunkEncoding]:
        if key in self.script:
            return self.script[key]
        return [ChunkEncoding(np.ones(self.default_dim), {"table": 1.0})]

    def encode_page(self, page) -> list[ChunkEncoding]:
        path = Path(page)
        if not path.is_file():
            raise PageDecodeError(f"cannot read page image: {path}")
        return self._lookup(path.stem)

    def encode_text(self, text: str) -> list[ChunkEncoding]:
        return self._lookup(text)


def chunk(logits: dict[str, float], dim: int = 4,
          fill: float = 1.0) -> ChunkEncoding:
    return ChunkEncoding(np.full(dim, fill), dict(logits))


def read_records(path: Path) -> list[dict]:
    return [json.loads(line) for line in
            path.read_text(encoding="utf-8").splitlines()]


@pytest.fixture
def pages_dir(tmp_path: Path) -> Path:
    return tmp_path / "pages"
