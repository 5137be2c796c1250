"""Inverted index over sparse embeddings, dense vector store, and the
similarity primitives (cosine, late-interaction MaxSim) behind
first-stage retrieval.  Includes a byte-stable snapshot format."""

from __future__ import annotations

import json
import math
import os
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .model import DataError, DenseRep, SparseVec, write_text_atomic

__all__ = [
    "DenseStore",
    "INDEX_MAGIC",
    "InvertedIndex",
    "build_dense_store",
    "build_index",
    "dense_cosine",
    "dense_score",
    "dense_topk",
    "load_index",
    "maxsim",
    "save_index",
    "sparse_cosine",
    "sparse_scores",
    "sparse_topk",
]

INDEX_MAGIC = "HYDX1"


@dataclass
class InvertedIndex:
    """Lemma -> postings of ``(doc_id, weight)``, plus per-doc norms.

    Postings are kept sorted by doc_id.  ``norms`` has no entry for a
    document whose sparse vector is empty -- such documents still appear
    in ``doc_ids`` and score 0 against every query.
    """

    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    norms: dict[str, float] = field(default_factory=dict)
    doc_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._id_set = set(self.doc_ids)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._id_set


def build_index(corpus: Iterable[tuple[str, SparseVec]]) -> InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = {}
    norms: dict[str, float] = {}
    doc_ids: list[str] = []
    seen: set[str] = set()
    for doc_id, vec in corpus:
        if doc_id in seen:
            raise DataError(f"duplicate doc_id {doc_id!r} in index build")
        seen.add(doc_id)
        doc_ids.append(doc_id)
        for lemma, weight in vec.items():
            if not lemma:
                raise DataError(f"empty lemma in sparse vector for {doc_id!r}")
            if not isinstance(weight, int) or isinstance(weight, bool) or weight < 1:
                raise DataError(
                    f"sparse weight for {doc_id!r}/{lemma!r} must be an integer "
                    f">= 1, got {weight!r}")
            postings.setdefault(lemma, []).append((doc_id, weight))
        if vec:
            norms[doc_id] = math.sqrt(sum(w * w for w in vec.values()))
    for plist in postings.values():
        plist.sort(key=lambda entry: entry[0])
    doc_ids.sort()
    return InvertedIndex(postings=postings, norms=norms, doc_ids=doc_ids)


def _query_norm(query: SparseVec) -> float:
    return math.sqrt(sum(w * w for w in query.values()))


def sparse_cosine(query: SparseVec, index: InvertedIndex, doc_id: str) -> float:
    """Cosine between a query sparse vector and one indexed document.

    Either side empty scores 0; a doc_id the index has never seen is an
    error (those are different situations and must not be conflated).
    """
    if doc_id not in index:
        raise DataError(f"unknown doc_id {doc_id!r}")
    doc_norm = index.norms.get(doc_id)
    if doc_norm is None or not query:
        return 0.0
    dot = 0
    for lemma, q_weight in query.items():
        plist = index.postings.get(lemma)
        if not plist:
            continue
        pos = bisect_left(plist, doc_id, key=lambda entry: entry[0])
        if pos < len(plist) and plist[pos][0] == doc_id:
            dot += q_weight * plist[pos][1]
    if dot == 0:
        return 0.0
    return dot / (_query_norm(query) * doc_norm)


def sparse_scores(query: SparseVec, index: InvertedIndex,
                  doc_ids: Iterable[str] | None = None) -> dict[str, float]:
    """Cosine against many documents in one pass over the postings."""
    targets = index.doc_ids if doc_ids is None else list(doc_ids)
    for doc_id in targets:
        if doc_id not in index:
            raise DataError(f"unknown doc_id {doc_id!r}")
    dots: dict[str, int] = {}
    for lemma, q_weight in query.items():
        for doc_id, d_weight in index.postings.get(lemma, ()):
            dots[doc_id] = dots.get(doc_id, 0) + q_weight * d_weight
    q_norm = _query_norm(query)
    scores: dict[str, float] = {}
    for doc_id in targets:
        dot = dots.get(doc_id, 0)
        scores[doc_id] = (
            dot / (q_norm * index.norms[doc_id]) if dot else 0.0)
    return scores


def sparse_topk(query: SparseVec, index: InvertedIndex,
                k: int) -> list[tuple[str, float]]:
    """Top-k docs by sparse cosine; zero-scoring docs fill out short lists."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = sparse_scores(query, index)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


# ---------------------------------------------------------------------------
# Dense side
# ---------------------------------------------------------------------------


@dataclass
class DenseStore:
    """Uniform-kind, uniform-dim collection of dense representations."""

    kind: str
    dim: int
    vectors: dict[str, DenseRep] = field(default_factory=dict)

    @property
    def doc_ids(self) -> list[str]:
        return sorted(self.vectors)


def build_dense_store(items: Iterable[tuple[str, DenseRep]]) -> DenseStore:
    kind: str | None = None
    dim: int | None = None
    vectors: dict[str, DenseRep] = {}
    for doc_id, rep in items:
        if doc_id in vectors:
            raise DataError(f"duplicate doc_id {doc_id!r} in dense store build")
        if kind is None:
            kind, dim = rep.kind, rep.dim
        elif rep.kind != kind:
            raise DataError(
                f"mixed dense kinds in store: {kind!r} then {rep.kind!r} "
                f"({doc_id!r})")
        elif rep.dim != dim:
            raise DataError(
                f"mixed dense dims in store: {dim} then {rep.dim} ({doc_id!r})")
        vectors[doc_id] = rep
    if kind is None:
        raise DataError("cannot build a dense store from zero records")
    return DenseStore(kind=kind, dim=dim, vectors=vectors)


def _single_vector(rep: DenseRep, what: str) -> np.ndarray:
    if rep.count != 1:
        raise ValueError(f"{what} must hold exactly one vector, found {rep.count}")
    return rep.vectors[0]


def dense_cosine(a: DenseRep, b: DenseRep) -> float:
    """Cosine between two single-vector representations."""
    va = _single_vector(a, "cosine operand")
    vb = _single_vector(b, "cosine operand")
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.dot(va, vb) / (na * nb))


def maxsim(query: DenseRep, doc: DenseRep) -> float:
    """Late-interaction score: for each query vector take its best match
    among the doc vectors (unit-normalized dot), then sum."""
    if query.count == 0 or doc.count == 0:
        raise ValueError("maxsim requires at least one vector per side")
    if query.dim != doc.dim:
        raise ValueError(f"dimension mismatch: {query.dim} vs {doc.dim}")
    q_norms = np.linalg.norm(query.vectors, axis=1)
    d_norms = np.linalg.norm(doc.vectors, axis=1)
    if not (q_norms > 0).all() or not (d_norms > 0).all():
        raise ValueError("maxsim undefined for a zero vector")
    q_unit = query.vectors / q_norms[:, None]
    d_unit = doc.vectors / d_norms[:, None]
    # Broadcast instead of matmul: every pairwise dot is then reduced in
    # isolation, so adding/permuting doc vectors can never perturb the
    # bits of the surviving maxima.
    sims = (q_unit[:, None, :] * d_unit[None, :, :]).sum(axis=2)
    return float(sims.max(axis=1).sum())


def dense_score(query: DenseRep, doc: DenseRep) -> float:
    """Kind-appropriate similarity: cosine for single, MaxSim for multi."""
    if doc.kind == "multi" or query.kind == "multi":
        return maxsim(query, doc)
    return dense_cosine(query, doc)


def dense_topk(query: DenseRep, store: DenseStore,
               k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if query.kind != store.kind:
        raise ValueError(
            f"query kind {query.kind!r} does not match store kind {store.kind!r}")
    scored = [(doc_id, dense_score(query, rep)) for doc_id, rep in
              store.vectors.items()]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


# ---------------------------------------------------------------------------
# Snapshot persistence
# ---------------------------------------------------------------------------


def save_index(index: InvertedIndex, store: DenseStore,
               path: str | os.PathLike[str],
               meta: Mapping[str, object] | None = None) -> None:
    """Write a versioned snapshot; identical inputs give identical bytes."""
    payload = {
        "postings": {lemma: [[doc_id, weight] for doc_id, weight in plist]
                     for lemma, plist in index.postings.items()},
        "norms": index.norms,
        "doc_ids": index.doc_ids,
        "dense": {
            "kind": store.kind,
            "dim": store.dim,
            "vectors": {doc_id: rep.vectors.tolist()
                        for doc_id, rep in store.vectors.items()},
        },
        "meta": dict(meta or {}),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    write_text_atomic(path, INDEX_MAGIC + "\n" + blob + "\n")


def load_index(path: str | os.PathLike[str]
               ) -> tuple[InvertedIndex, DenseStore, dict[str, object]]:
    with open(path, encoding="utf-8") as handle:
        magic = handle.readline().rstrip("\n")
        if magic != INDEX_MAGIC:
            raise DataError(
                f"not an index snapshot (expected magic {INDEX_MAGIC!r}, "
                f"got {magic!r})", path, 1)
        try:
            payload = json.loads(handle.read())
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt index payload ({exc.msg})", path) from exc
    try:
        index = InvertedIndex(
            postings={lemma: [(doc_id, weight) for doc_id, weight in plist]
                      for lemma, plist in payload["postings"].items()},
            norms={doc_id: float(n) for doc_id, n in payload["norms"].items()},
            doc_ids=list(payload["doc_ids"]),
        )
        dense = payload["dense"]
        store = DenseStore(
            kind=dense["kind"],
            dim=int(dense["dim"]),
            vectors={doc_id: DenseRep(dense["kind"], rows)
                     for doc_id, rows in dense["vectors"].items()},
        )
        meta = dict(payload.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt index payload ({exc})", path) from exc
    return index, store, meta
