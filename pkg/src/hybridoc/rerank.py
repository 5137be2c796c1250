"""Pointwise in-context reranking: demonstration pools, selection
strategies, two-way relevance scoring, and candidate reordering.

A candidate's relevance probability comes from a stable two-way softmax
over the endpoint's raw (yes, no) logits; demonstrations are picked per
candidate by one of three strategies and ride along in the prompt.
"""

from __future__ import annotations

import json
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .clients import EndpointError, ModelEndpoint, PromptBundle
from .model import (DataError, DenseRep, QueryRecord, fmt_float,
                    write_text_atomic)

__all__ = [
    "DEFAULT_INSTRUCTION",
    "Demonstration",
    "LABELS",
    "SelectionStrategy",
    "joint_similarity",
    "load_demo_pool",
    "mean_pooled",
    "rerank_candidates",
    "score_pair",
    "select_demos",
    "validate_demonstration",
    "write_demo_pool",
]

LABEL_RELEVANT = "relevant"
LABEL_NOT_RELEVANT = "not_relevant"
LABELS = (LABEL_RELEVANT, LABEL_NOT_RELEVANT)

STRATEGIES = ("random", "difficult", "similar")

DEFAULT_INSTRUCTION = (
    "Decide whether the document answers the query; reply yes or no.")

DEFAULT_DEMO_K = 4


@dataclass
class Demonstration:
    """One worked example for the prompt: a query/document pair with its
    label, a reasoning chain, a confidence score, and single-vector
    embeddings of both sides (used by similarity-based selection)."""

    demo_id: str
    query_text: str
    doc_ref: str
    label: str
    reasoning: str
    confidence: float
    q_dense: DenseRep
    d_dense: DenseRep


def validate_demonstration(demo: Demonstration) -> list[str]:
    problems: list[str] = []
    if not demo.demo_id:
        problems.append("demo_id: must be non-empty")
    if demo.label not in LABELS:
        problems.append(f"label: must be one of {LABELS}, got {demo.label!r}")
    if not demo.reasoning:
        problems.append("reasoning: must be non-empty")
    if not (math.isfinite(demo.confidence) and 0.0 <= demo.confidence <= 1.0):
        problems.append(f"confidence: must be in [0, 1], got {demo.confidence!r}")
    for side, rep in (("q_dense", demo.q_dense), ("d_dense", demo.d_dense)):
        if rep.kind != "single" or rep.count != 1:
            problems.append(f"{side}: must be a single-vector representation")
        elif not np.isfinite(rep.vectors).all():
            problems.append(f"{side}: non-finite component")
    return problems


# ---------------------------------------------------------------------------
# Demo pool persistence (JSON-lines with inline embeddings)
# ---------------------------------------------------------------------------


def _demo_to_line(demo: Demonstration) -> str:
    def vec(rep: DenseRep) -> str:
        return "[" + ",".join(fmt_float(v) for v in rep.vectors[0]) + "]"

    return ('{"demo_id":%s,"query_text":%s,"doc_ref":%s,"label":%s,'
            '"reasoning":%s,"confidence":%s,"q_dense":%s,"d_dense":%s}' % (
                json.dumps(demo.demo_id, ensure_ascii=False),
                json.dumps(demo.query_text, ensure_ascii=False),
                json.dumps(demo.doc_ref, ensure_ascii=False),
                json.dumps(demo.label, ensure_ascii=False),
                json.dumps(demo.reasoning, ensure_ascii=False),
                fmt_float(demo.confidence), vec(demo.q_dense),
                vec(demo.d_dense)))


def write_demo_pool(demos: Sequence[Demonstration],
                    path: str | os.PathLike[str]) -> None:
    write_text_atomic(path, "".join(_demo_to_line(d) + "\n" for d in demos))


def load_demo_pool(path: str | os.PathLike[str]) -> list[Demonstration]:
    demos: list[Demonstration] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON ({exc.msg})", path, lineno) from exc
            try:
                demo = Demonstration(
                    demo_id=obj["demo_id"], query_text=obj["query_text"],
                    doc_ref=obj["doc_ref"], label=obj["label"],
                    reasoning=obj["reasoning"],
                    confidence=float(obj["confidence"]),
                    q_dense=DenseRep("single", [obj["q_dense"]]),
                    d_dense=DenseRep("single", [obj["d_dense"]]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad demonstration record ({exc})",
                                path, lineno) from exc
            problems = validate_demonstration(demo)
            if problems:
                raise DataError("invalid demonstration: " + "; ".join(problems),
                                path, lineno)
            if demo.demo_id in seen:
                raise DataError(f"duplicate demo_id {demo.demo_id!r}", path, lineno)
            seen.add(demo.demo_id)
            demos.append(demo)
    return demos


# ---------------------------------------------------------------------------
# Scoring and selection
# ---------------------------------------------------------------------------


def score_pair(yes: float, no: float) -> float:
    """Two-way softmax probability of 'yes', stable for any logit scale."""
    if not (math.isfinite(yes) and math.isfinite(no)):
        raise ValueError(f"logits must be finite, got ({yes!r}, {no!r})")
    peak = max(yes, no)
    e_yes = math.exp(yes - peak)
    e_no = math.exp(no - peak)
    return e_yes / (e_yes + e_no)


def mean_pooled(rep: DenseRep) -> np.ndarray:
    """Collapse a representation to one vector (multi -> mean of chunks)."""
    if rep.count == 0:
        raise ValueError("cannot pool an empty representation")
    if rep.count == 1:
        return rep.vectors[0]
    return rep.vectors.mean(axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def joint_similarity(q_dense: DenseRep, d_dense: DenseRep, demo: Demonstration,
                     query_weight: float = 0.5) -> float:
    """Weighted mean of query-side and doc-side cosine to a demonstration.

    Multi-vector inputs are mean-pooled first; the default weights split
    evenly between the two sides.
    """
    if not 0.0 <= query_weight <= 1.0:
        raise ValueError(f"query_weight must be in [0, 1], got {query_weight}")
    q_sim = _cosine(mean_pooled(q_dense), mean_pooled(demo.q_dense))
    d_sim = _cosine(mean_pooled(d_dense), mean_pooled(demo.d_dense))
    return query_weight * q_sim + (1.0 - query_weight) * d_sim


@dataclass
class SelectionStrategy:
    """How to pick in-context demonstrations for one candidate."""

    kind: str = "similar"
    k: int = DEFAULT_DEMO_K
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRATEGIES:
            raise ValueError(f"kind must be one of {STRATEGIES}, got {self.kind!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.kind == "random" and self.seed is None:
            raise ValueError("random selection requires an explicit seed")


def select_demos(strategy: SelectionStrategy, q_dense: DenseRep | None,
                 d_dense: DenseRep | None, pool: Sequence[Demonstration],
                 query_weight: float = 0.5) -> list[Demonstration]:
    """Pick ``strategy.k`` demonstrations from the pool.

    * random: seeded uniform sample without replacement, in sample order;
    * difficult: lowest-confidence demonstrations first;
    * similar: highest joint similarity to the (query, candidate) pair
      first -- requires both embeddings.

    A pool smaller than k is returned whole (strategy order applies).
    """
    if not pool:
        return []
    k = min(strategy.k, len(pool))
    if strategy.kind == "random":
        rng = random.Random(strategy.seed)
        return rng.sample(list(pool), k)
    if strategy.kind == "difficult":
        ranked = sorted(pool, key=lambda demo: (demo.confidence, demo.demo_id))
        return ranked[:k]
    if q_dense is None or d_dense is None:
        raise ValueError("similar selection needs query and candidate embeddings")
    scored = sorted(
        pool,
        key=lambda demo: (-joint_similarity(q_dense, d_dense, demo,
                                            query_weight), demo.demo_id))
    return scored[:k]


def rerank_candidates(query: QueryRecord, candidates: Sequence[str],
                      client: ModelEndpoint, strategy: SelectionStrategy,
                      pool: Sequence[Demonstration],
                      doc_dense: Mapping[str, DenseRep] | None = None,
                      instruction: str = DEFAULT_INSTRUCTION,
                      query_weight: float = 0.5,
                      parallelism: int = 1) -> list[tuple[str, float]]:
    """Score every candidate and reorder by descending probability.

    Ties keep the incoming order (the first-stage rank).  Any endpoint
    failure aborts the whole query with the offending doc_id named; no
    partial results are returned.
    """
    if not candidates:
        raise ValueError("no candidates to rerank")
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")

    def score_one(doc_id: str) -> float:
        d_rep = doc_dense.get(doc_id) if doc_dense is not None else None
        if strategy.kind == "similar" and d_rep is None:
            raise DataError(
                f"similar selection needs a dense representation for {doc_id!r}")
        demos = select_demos(strategy, query.dense, d_rep, pool, query_weight)
        bundle = PromptBundle(instruction=instruction, query=query.text,
                              doc_ref=doc_id, demos=demos)
        try:
            yes, no = client.score(bundle)
        except EndpointError as exc:
            raise EndpointError(
                f"scoring failed for doc {doc_id!r}: {exc}") from exc
        return score_pair(yes, no)

    if parallelism == 1:
        scores = [score_one(doc_id) for doc_id in candidates]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool_exec:
            scores = list(pool_exec.map(score_one, candidates))

    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    return [(candidates[i], scores[i]) for i in order]
