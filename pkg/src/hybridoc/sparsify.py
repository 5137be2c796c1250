"""Sparse embedding pipeline: pool chunk logits, merge lemma variants,
filter noise tokens, then quantize to integer weights.

Each stage is a pure dict -> dict function so the steps can be tested
and composed independently; ``sparsify_record`` chains all four.
"""

from __future__ import annotations

import math
import os
from typing import Sequence

from .model import DataError, SPARSE_MAX_ENTRIES, SparseVec, TokenLogits

__all__ = [
    "LemmaMap",
    "StopwordSet",
    "filter_tokens",
    "lemmatize_aggregate",
    "load_lemma_map",
    "load_stopwords",
    "pool_chunk_logits",
    "process_logits",
    "round_half_away_from_zero",
    "sparsify_record",
]

# Surface form -> base form, applied before weighting so that inflected
# variants reinforce a single dimension instead of splitting mass.
LemmaMap = dict[str, str]

StopwordSet = set[str]

DEFAULT_TOP_K = SPARSE_MAX_ENTRIES
DEFAULT_SCALE = 100.0


def load_lemma_map(path: str | os.PathLike[str]) -> LemmaMap:
    """Load a two-column TSV of ``surface<TAB>lemma`` rows."""
    lemmas: LemmaMap = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise DataError("expected 'surface<TAB>lemma'", path, lineno)
            lemmas[fields[0]] = fields[1]
    return lemmas


def load_stopwords(path: str | os.PathLike[str]) -> StopwordSet:
    """Load a stopword list: one token per line, ``#`` starts a comment."""
    words: StopwordSet = set()
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            words.add(line.lower())
    return words


def pool_chunk_logits(chunks: Sequence[TokenLogits]) -> TokenLogits:
    """Max-pool token logits across chunks (absent token = absent, not 0)."""
    if not chunks:
        raise ValueError("no chunks")
    pooled: TokenLogits = {}
    for chunk in chunks:
        for token, value in chunk.items():
            current = pooled.get(token)
            if current is None or value > current:
                pooled[token] = value
    return pooled


def lemmatize_aggregate(logits: TokenLogits, lemmas: LemmaMap) -> TokenLogits:
    """Replace each token by its lemma, keeping the max on collisions."""
    merged: TokenLogits = {}
    for token, value in logits.items():
        lemma = lemmas.get(token, token)
        current = merged.get(lemma)
        if current is None or value > current:
            merged[lemma] = value
    return merged


def _has_alpha(token: str) -> bool:
    return any(ch.isalpha() for ch in token.strip())


def filter_tokens(logits: TokenLogits, stopwords: StopwordSet) -> TokenLogits:
    """Drop stopwords and tokens with no alphabetic content; lowercase the
    survivors, keeping the max where lowercasing collides."""
    kept: TokenLogits = {}
    for token, value in logits.items():
        lowered = token.lower()
        if lowered in stopwords or not _has_alpha(token):
            continue
        current = kept.get(lowered)
        if current is None or value > current:
            kept[lowered] = value
    return kept


def round_half_away_from_zero(value: float) -> int:
    """Round with .5 going away from zero (bankers' rounding would bias
    the quantized weights at exact halves)."""
    if value >= 0:
        return int(math.floor(value + 0.5))
    return int(math.ceil(value - 0.5))


def process_logits(logits: TokenLogits, top_k: int = DEFAULT_TOP_K,
                   scale: float = DEFAULT_SCALE) -> SparseVec:
    """Quantize logits to integer weights: ``round(scale * ln(1 + v))``
    with negatives clipped, zero weights dropped, and only the ``top_k``
    heaviest entries kept (ties broken toward the smaller key)."""
    if not 1 <= top_k <= SPARSE_MAX_ENTRIES:
        raise ValueError(f"top_k must be in [1, {SPARSE_MAX_ENTRIES}], got {top_k}")
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError(f"scale must be positive and finite, got {scale}")
    weighted: list[tuple[str, int]] = []
    for token, value in logits.items():
        weight = round_half_away_from_zero(scale * math.log1p(max(0.0, value)))
        if weight > 0:
            weighted.append((token, weight))
    weighted.sort(key=lambda item: (-item[1], item[0]))
    return dict(weighted[:top_k])


def sparsify_record(chunks: Sequence[TokenLogits], lemmas: LemmaMap,
                    stopwords: StopwordSet, top_k: int = DEFAULT_TOP_K,
                    scale: float = DEFAULT_SCALE) -> SparseVec:
    """Full pipeline: pool -> lemmatize -> filter -> quantize."""
    pooled = pool_chunk_logits(chunks)
    merged = lemmatize_aggregate(pooled, lemmas)
    kept = filter_tokens(merged, stopwords)
    return process_logits(kept, top_k=top_k, scale=scale)
