"""Self-supervised demonstration synthesis with a three-endpoint jury.

Each labeled pair (query, positive doc, negative doc) is handled by a
proposer chosen by rotation; the proposer writes reasoning chains for
both sides, the chains are gated by the proposer's own scores, and the
two remaining endpoints peer-review.  Only pairs surviving every stage
enter the demonstration pool.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .clients import EndpointError, ModelEndpoint, PromptBundle
from .model import (DataError, DenseRep, DocumentRecord, QueryRecord,
                    write_text_atomic)
from .rerank import (DEFAULT_INSTRUCTION, Demonstration, LABEL_NOT_RELEVANT,
                     LABEL_RELEVANT, _demo_to_line, mean_pooled, score_pair)

__all__ = [
    "EmbeddingLookup",
    "JURY_SIZE",
    "RejectionRecord",
    "STAGE_CONSENSUS",
    "STAGE_VERIFICATION",
    "SynthConfig",
    "SynthStats",
    "build_demo_pool",
    "load_checkpoint",
    "load_pairs",
    "synthesize_pair",
    "write_stats",
]

JURY_SIZE = 3

STAGE_VERIFICATION = "verification"
STAGE_CONSENSUS = "consensus"


@dataclass
class SynthConfig:
    """Decoding and gating parameters for synthesis runs."""

    temperature: float = 0.2
    top_p: float = 0.95
    confidence_threshold: float = 0.8
    reviewers_required: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if not (0.0 <= self.confidence_threshold < 1.0):
            raise ValueError(
                f"confidence_threshold must be in [0, 1), got "
                f"{self.confidence_threshold}")
        if not 1 <= self.reviewers_required <= JURY_SIZE - 1:
            raise ValueError(
                f"reviewers_required must be in [1, {JURY_SIZE - 1}], got "
                f"{self.reviewers_required}")


@dataclass(frozen=True)
class RejectionRecord:
    """Why one input pair was dropped, and at which stage."""

    pair_index: int
    query_text: str
    stage: str
    detail: str


@dataclass
class SynthStats:
    total_pairs: int = 0
    accepted_pairs: int = 0
    rejected_pairs: int = 0
    stage_counts: dict[str, int] = field(default_factory=dict)
    rejections: list[RejectionRecord] = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float | None:
        if self.total_pairs == 0:
            return None
        return self.accepted_pairs / self.total_pairs

    def record_rejection(self, rejection: RejectionRecord) -> None:
        self.rejected_pairs += 1
        self.stage_counts[rejection.stage] = (
            self.stage_counts.get(rejection.stage, 0) + 1)
        self.rejections.append(rejection)


@dataclass
class EmbeddingLookup:
    """Resolve query texts and doc refs to single-vector embeddings.

    Multi-vector representations are mean-pooled once here so every
    demonstration carries uniform single-vector embeddings.
    """

    queries: dict[str, DenseRep] = field(default_factory=dict)
    docs: dict[str, DenseRep] = field(default_factory=dict)

    @staticmethod
    def _pooled(rep: DenseRep) -> DenseRep:
        return DenseRep("single", [mean_pooled(rep)])

    @classmethod
    def from_records(cls, queries: Iterable[QueryRecord],
                     documents: Iterable[DocumentRecord]) -> EmbeddingLookup:
        return cls(
            queries={q.text: cls._pooled(q.dense) for q in queries},
            docs={d.doc_id: cls._pooled(d.dense) for d in documents},
        )

    def query_rep(self, text: str) -> DenseRep:
        rep = self.queries.get(text)
        if rep is None:
            raise DataError(f"no embedding for query text {text!r}")
        return rep

    def doc_rep(self, doc_ref: str) -> DenseRep:
        rep = self.docs.get(doc_ref)
        if rep is None:
            raise DataError(f"no embedding for doc_ref {doc_ref!r}")
        return rep


def load_pairs(path: str | os.PathLike[str]) -> list[tuple[str, str, str]]:
    """Load synthesis inputs: TSV of ``query_text, positive, negative``."""
    pairs: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not all(fields):
                raise DataError(
                    "expected 'query_text<TAB>positive_doc<TAB>negative_doc'",
                    path, lineno)
            pairs.append((fields[0], fields[1], fields[2]))
    return pairs


def synthesize_pair(query_text: str, d_pos: str, d_neg: str,
                    clients: Sequence[ModelEndpoint], cfg: SynthConfig,
                    q_dense: DenseRep, pos_dense: DenseRep, neg_dense: DenseRep,
                    pair_index: int = 0,
                    instruction: str = DEFAULT_INSTRUCTION
                    ) -> tuple[Demonstration, Demonstration] | RejectionRecord:
    """Run one pair through proposal, verification, and peer consensus.

    The proposer rotates with ``pair_index`` so load and stylistic bias
    spread across the jury.  Verification requires the positive side to
    score above the confidence threshold and the negative side below its
    complement; both reasoning chains must then be approved by
    ``reviewers_required`` of the two peers.  Endpoint failures raise
    ``EndpointError`` -- a failed call is not a rejection.
    """
    if len(clients) != JURY_SIZE:
        raise ValueError(f"synthesis needs exactly {JURY_SIZE} endpoints, "
                         f"got {len(clients)}")
    proposer = clients[pair_index % JURY_SIZE]
    peers = [c for i, c in enumerate(clients) if i != pair_index % JURY_SIZE]

    chains = {}
    for doc_ref, label in ((d_pos, LABEL_RELEVANT), (d_neg, LABEL_NOT_RELEVANT)):
        reasoning = proposer.generate(query_text, doc_ref, label,
                                      temperature=cfg.temperature,
                                      top_p=cfg.top_p)
        if not reasoning:
            raise EndpointError(
                f"{proposer.name}: empty reasoning for {doc_ref!r}")
        chains[label] = reasoning

    demo_pos = Demonstration(
        demo_id=f"pair{pair_index:05d}-pos", query_text=query_text,
        doc_ref=d_pos, label=LABEL_RELEVANT, reasoning=chains[LABEL_RELEVANT],
        confidence=0.0, q_dense=q_dense, d_dense=pos_dense)
    demo_neg = Demonstration(
        demo_id=f"pair{pair_index:05d}-neg", query_text=query_text,
        doc_ref=d_neg, label=LABEL_NOT_RELEVANT,
        reasoning=chains[LABEL_NOT_RELEVANT], confidence=0.0,
        q_dense=q_dense, d_dense=neg_dense)

    # Verification: the proposer scores both sides with the fresh chains
    # in context; the pair passes only if both land on the right side of
    # the gate.
    demos = [demo_pos, demo_neg]
    score_pos = score_pair(*proposer.score(PromptBundle(
        instruction=instruction, query=query_text, doc_ref=d_pos, demos=demos)))
    score_neg = score_pair(*proposer.score(PromptBundle(
        instruction=instruction, query=query_text, doc_ref=d_neg, demos=demos)))
    gate = cfg.confidence_threshold
    if not (score_pos > gate and score_neg < 1.0 - gate):
        return RejectionRecord(
            pair_index, query_text, STAGE_VERIFICATION,
            f"scores (pos={score_pos:.6f}, neg={score_neg:.6f}) outside "
            f"gates (>{gate:g}, <{1.0 - gate:g})")

    # Consensus: both chains must clear the peer-review quorum.
    for demo in (demo_pos, demo_neg):
        approvals = sum(
            1 for peer in peers
            if peer.review(query_text, demo.doc_ref, demo.label, demo.reasoning))
        if approvals < cfg.reviewers_required:
            return RejectionRecord(
                pair_index, query_text, STAGE_CONSENSUS,
                f"{demo.label} chain got {approvals}/{len(peers)} approvals, "
                f"needs {cfg.reviewers_required}")

    demo_pos.confidence = score_pos
    demo_neg.confidence = 1.0 - score_neg
    return demo_pos, demo_neg


# ---------------------------------------------------------------------------
# Pool building with checkpointing
# ---------------------------------------------------------------------------


def _checkpoint_blob(next_index: int, pool: list[Demonstration],
                     stats: SynthStats) -> str:
    return json.dumps({
        "next_index": next_index,
        "pool": [json.loads(_demo_to_line(d)) for d in pool],
        "stats": {
            "total_pairs": stats.total_pairs,
            "accepted_pairs": stats.accepted_pairs,
            "rejected_pairs": stats.rejected_pairs,
            "stage_counts": stats.stage_counts,
            "rejections": [
                {"pair_index": r.pair_index, "query_text": r.query_text,
                 "stage": r.stage, "detail": r.detail}
                for r in stats.rejections],
        },
    }, sort_keys=True)


def load_checkpoint(path: str | os.PathLike[str]
                    ) -> tuple[int, list[Demonstration], SynthStats]:
    try:
        with open(path, encoding="utf-8") as handle:
            blob = json.load(handle)
        pool = [
            Demonstration(
                demo_id=obj["demo_id"], query_text=obj["query_text"],
                doc_ref=obj["doc_ref"], label=obj["label"],
                reasoning=obj["reasoning"], confidence=float(obj["confidence"]),
                q_dense=DenseRep("single", [obj["q_dense"]]),
                d_dense=DenseRep("single", [obj["d_dense"]]))
            for obj in blob["pool"]]
        s = blob["stats"]
        stats = SynthStats(
            total_pairs=int(s["total_pairs"]),
            accepted_pairs=int(s["accepted_pairs"]),
            rejected_pairs=int(s["rejected_pairs"]),
            stage_counts={k: int(v) for k, v in s["stage_counts"].items()},
            rejections=[RejectionRecord(int(r["pair_index"]), r["query_text"],
                                        r["stage"], r["detail"])
                        for r in s["rejections"]])
        return int(blob["next_index"]), pool, stats
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"unusable checkpoint ({exc})", path) from exc


def build_demo_pool(pairs: Sequence[tuple[str, str, str]],
                    clients: Sequence[ModelEndpoint], cfg: SynthConfig,
                    embeddings: EmbeddingLookup,
                    checkpoint_path: str | os.PathLike[str] | None = None,
                    instruction: str = DEFAULT_INSTRUCTION,
                    parallelism: int = 1
                    ) -> tuple[list[Demonstration], SynthStats]:
    """Synthesize demonstrations for every input pair, in input order.

    The proposer rotation follows input position, so parallel execution
    changes neither assignments nor output order.  On an endpoint
    failure, completed work is checkpointed (when a path was given) and
    the error re-raised; a later call with the same checkpoint resumes
    after the last completed pair.  The checkpoint file is removed on
    successful completion.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    start = 0
    pool: list[Demonstration] = []
    stats = SynthStats()
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        start, pool, stats = load_checkpoint(checkpoint_path)

    def run_one(indexed_pair: tuple[int, tuple[str, str, str]]
                ) -> tuple[Demonstration, Demonstration] | RejectionRecord:
        index, (query_text, d_pos, d_neg) = indexed_pair
        return synthesize_pair(
            query_text, d_pos, d_neg, clients, cfg,
            q_dense=embeddings.query_rep(query_text),
            pos_dense=embeddings.doc_rep(d_pos),
            neg_dense=embeddings.doc_rep(d_neg),
            pair_index=index, instruction=instruction)

    todo = list(enumerate(pairs))[start:]

    def consume(index: int,
                outcome: tuple[Demonstration, Demonstration] | RejectionRecord
                ) -> None:
        stats.total_pairs += 1
        if isinstance(outcome, RejectionRecord):
            stats.record_rejection(outcome)
        else:
            stats.accepted_pairs += 1
            pool.extend(outcome)

    try:
        if parallelism == 1:
            for index, pair in todo:
                consume(index, run_one((index, pair)))
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as executor:
                futures = [(index, executor.submit(run_one, (index, pair)))
                           for index, pair in todo]
                for index, future in futures:
                    consume(index, future.result())
    except EndpointError:
        # Pairs are consumed strictly in input order, so the running
        # total across sessions doubles as the resume cursor.
        if checkpoint_path is not None:
            write_text_atomic(checkpoint_path,
                              _checkpoint_blob(stats.total_pairs, pool, stats))
        raise
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        os.remove(checkpoint_path)
    return pool, stats


def write_stats(stats: SynthStats, path: str | os.PathLike[str]) -> None:
    """Persist a synthesis report as deterministic JSON."""
    blob = {
        "total_pairs": stats.total_pairs,
        "accepted_pairs": stats.accepted_pairs,
        "rejected_pairs": stats.rejected_pairs,
        "acceptance_rate": stats.acceptance_rate,
        "stage_counts": stats.stage_counts,
        "rejections": [
            {"pair_index": r.pair_index, "query_text": r.query_text,
             "stage": r.stage, "detail": r.detail}
            for r in stats.rejections],
    }
    write_text_atomic(path, json.dumps(blob, sort_keys=True, indent=2) + "\n")
