"""Score fusion for hybrid retrieval: per-channel min-max normalization
over a shared candidate pool, then a convex combination of the dense and
sparse channels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .model import DataError, QueryRecord
from .sparsify import (DEFAULT_SCALE, DEFAULT_TOP_K, LemmaMap, StopwordSet,
                       sparsify_record)
from .vecindex import (DenseStore, InvertedIndex, dense_score, dense_topk,
                       sparse_scores, sparse_topk)

__all__ = ["FusionConfig", "fuse", "minmax_normalize", "retrieve_hybrid"]

CHANNEL_K_FLOOR = 50


@dataclass
class FusionConfig:
    """Knobs for the hybrid retrieval stage.

    ``dense_weight`` is the convex weight on the dense channel (the
    sparse channel gets the complement).  ``channel_k`` is how deep each
    channel's candidate list goes before pooling; left unset it resolves
    to ``max(50, 2 * m)`` so the pool comfortably covers the final
    cutoff ``m``.
    """

    dense_weight: float = 0.8
    channel_k: int | None = None
    m: int = 30

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dense_weight)
                and 0.0 <= self.dense_weight <= 1.0):
            raise ValueError(
                f"dense_weight must be in [0, 1], got {self.dense_weight}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.channel_k is not None and self.channel_k < self.m:
            raise ValueError(
                f"channel_k ({self.channel_k}) must be >= m ({self.m})")

    @property
    def resolved_channel_k(self) -> int:
        if self.channel_k is not None:
            return self.channel_k
        return max(CHANNEL_K_FLOOR, 2 * self.m)


def minmax_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Rescale scores to [0, 1] over the given pool.

    A degenerate pool (all scores equal, including a single candidate)
    maps everything to 0.5 so the other channel fully decides the order.
    """
    if not scores:
        raise ValueError("cannot normalize an empty score pool")
    values = scores.values()
    lo, hi = min(values), max(values)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("cannot normalize non-finite scores")
    if lo == hi:
        return {doc_id: 0.5 for doc_id in scores}
    span = hi - lo
    return {doc_id: (value - lo) / span for doc_id, value in scores.items()}


def fuse(dense_norm: float, sparse_norm: float, dense_weight: float) -> float:
    """Convex combination of two already-normalized channel scores."""
    for name, value in (("dense", dense_norm), ("sparse", sparse_norm)):
        if not (0.0 <= value <= 1.0):
            raise ValueError(
                f"{name} score {value} outside [0, 1]; normalize before fusing")
    if not (0.0 <= dense_weight <= 1.0):
        raise ValueError(f"dense_weight must be in [0, 1], got {dense_weight}")
    return dense_weight * dense_norm + (1.0 - dense_weight) * sparse_norm


def retrieve_hybrid(query: QueryRecord, index: InvertedIndex, store: DenseStore,
                    lemmas: LemmaMap, stopwords: StopwordSet,
                    cfg: FusionConfig | None = None,
                    sparsify_top_k: int = DEFAULT_TOP_K,
                    sparsify_scale: float = DEFAULT_SCALE
                    ) -> list[tuple[str, float]]:
    """Run both channels, normalize over the pooled candidates, fuse.

    Returns the top ``cfg.m`` documents as ``(doc_id, fused_score)``,
    sorted by descending score with ties broken by ascending doc_id.
    Documents surfaced by only one channel still get their raw score
    computed on the other channel before normalization, so pool
    membership never silently zeroes a channel.
    """
    cfg = cfg or FusionConfig()
    query_vec = sparsify_record(query.raw_logits, lemmas, stopwords,
                                top_k=sparsify_top_k, scale=sparsify_scale)
    k = cfg.resolved_channel_k
    pool = {doc_id for doc_id, _ in sparse_topk(query_vec, index, k)}
    pool.update(doc_id for doc_id, _ in dense_topk(query.dense, store, k))
    if not pool:
        return []
    sparse_raw = sparse_scores(query_vec, index, pool)
    dense_raw = {}
    for doc_id in pool:
        rep = store.vectors.get(doc_id)
        if rep is None:
            raise DataError(f"doc_id {doc_id!r} missing from dense store")
        dense_raw[doc_id] = dense_score(query.dense, rep)
    sparse_norm = minmax_normalize(sparse_raw)
    dense_norm = minmax_normalize(dense_raw)
    fused = [(doc_id, fuse(dense_norm[doc_id], sparse_norm[doc_id],
                           cfg.dense_weight)) for doc_id in pool]
    fused.sort(key=lambda item: (-item[1], item[0]))
    return fused[:cfg.m]
