"""Turn pages and query strings into engine-ready dump files.

Pages are processed in batches of ``cfg.batch_size`` (an inference
throughput knob); the output file is always appended in input order, so
batching never changes the emitted bytes.  A page that fails to decode
is skipped with a logged id rather than aborting the whole export.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .config import AdapterConfig, AdapterError
from .dumpio import serialize_document, serialize_query, write_dump_atomic
from .encoders import ChunkEncoding, PageDecodeError, PageEncoder, load_encoder

__all__ = ["ExportStats", "export_corpus", "export_queries"]

logger = logging.getLogger("vlm_adapter")


@dataclass
class ExportStats:
    written: int = 0
    skipped: list[str] = field(default_factory=list)


def _clamp_logits(logits: Mapping[str, float], cap: int) -> dict[str, float]:
    """Positive logits only, the ``cap`` largest kept (ties by token)."""
    positive = [(token, float(value)) for token, value in logits.items()
                if value > 0]
    positive.sort(key=lambda item: (-item[1], item[0]))
    return dict(positive[:cap])


def _record_parts(chunks: Sequence[ChunkEncoding],
                  cfg: AdapterConfig) -> tuple[list[list[float]],
                                               list[dict[str, float]]]:
    vectors = [[float(v) for v in chunk.vector] for chunk in chunks]
    logit_chunks = [_clamp_logits(chunk.logits, cfg.raw_logit_cap)
                    for chunk in chunks]
    return vectors, logit_chunks


def _batches(items: Sequence, size: int) -> Iterator[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def _page_ids(pages: Sequence[str | os.PathLike[str]]) -> list[str]:
    ids: list[str] = []
    seen: dict[str, str] = {}
    for page in pages:
        page_id = Path(page).stem
        if page_id in seen:
            raise AdapterError(
                f"duplicate page id {page_id!r} (from {seen[page_id]} "
                f"and {page})")
        seen[page_id] = str(page)
        ids.append(page_id)
    return ids


def export_corpus(pages: Sequence[str | os.PathLike[str]],
                  cfg: AdapterConfig, out: str | os.PathLike[str],
                  encoder: PageEncoder | None = None) -> ExportStats:
    """Encode every page and write one DocumentRecord line per page."""
    cfg.validate()
    encoder = encoder if encoder is not None else load_encoder(cfg)
    ids = _page_ids(pages)
    stats = ExportStats()
    lines: list[str] = []
    for batch in _batches(list(zip(ids, pages)), cfg.batch_size):
        for page_id, page in batch:
            try:
                chunks = encoder.encode_page(page)
            except PageDecodeError as exc:
                logger.warning("skipped %s: %s", page_id, exc)
                stats.skipped.append(page_id)
                continue
            vectors, logit_chunks = _record_parts(chunks, cfg)
            lines.append(serialize_document(
                page_id, cfg.mode, vectors, logit_chunks,
                metadata={"source": Path(page).name}))
            stats.written += 1
    write_dump_atomic(out, lines)
    return stats


def export_queries(texts: Sequence[str], cfg: AdapterConfig,
                   out: str | os.PathLike[str],
                   encoder: PageEncoder | None = None) -> ExportStats:
    """Encode query strings; ids are q0000, q0001, ... in input order."""
    cfg.validate()
    encoder = encoder if encoder is not None else load_encoder(cfg)
    stats = ExportStats()
    lines: list[str] = []
    for batch in _batches(list(enumerate(texts)), cfg.batch_size):
        for i, text in batch:
            chunks = encoder.encode_text(text)
            vectors, logit_chunks = _record_parts(chunks, cfg)
            lines.append(serialize_query(f"q{i:04d}", text, cfg.mode,
                                         vectors, logit_chunks))
            stats.written += 1
    write_dump_atomic(out, lines)
    return stats
