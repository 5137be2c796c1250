"""Graded-relevance evaluation: DCG/nDCG, IDCG-weighted aggregation,
recall, and a deterministic report over runs, judgments, and optional
query groupings.

Queries whose judgments contain no positive grade have no defined nDCG
or recall; they are *skipped* (reported as such), never scored as zero.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .model import (DataError, Judgment, RELEVANCE_MAX, RELEVANCE_MIN,
                    RunEntry, load_qrels, load_run, write_text_atomic)

__all__ = [
    "EvalReport",
    "dcg_at_k",
    "evaluate",
    "evaluate_run",
    "ideal_dcg",
    "load_group_map",
    "ndcg_at_k",
    "qrels_by_query",
    "recall_at_k",
    "run_rankings",
    "weighted_ndcg",
    "weighted_ndcg_from_stats",
    "write_report",
]


def dcg_at_k(relevances: Sequence[int], k: int) -> float:
    """Discounted cumulative gain over the first k grades, in rank order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    total = 0.0
    for i, rel in enumerate(relevances[:k], start=1):
        if isinstance(rel, bool) or not isinstance(rel, int):
            raise ValueError(f"relevance grades must be integers, got {rel!r}")
        if not RELEVANCE_MIN <= rel <= RELEVANCE_MAX:
            raise ValueError(
                f"relevance {rel} outside [{RELEVANCE_MIN}, {RELEVANCE_MAX}]")
        total += (2 ** rel - 1) / math.log2(i + 1)
    return total


def ideal_dcg(judged: Mapping[str, int], k: int) -> float:
    """DCG of the best possible ordering of the judged documents."""
    grades = sorted(judged.values(), reverse=True)
    return dcg_at_k(grades, k)


def ndcg_at_k(ranking: Sequence[str], judged: Mapping[str, int],
              k: int) -> float | None:
    """Normalized DCG, or None when no positive judgment exists.

    Documents missing from the judgments count as grade 0.
    """
    idcg = ideal_dcg(judged, k)
    if idcg == 0.0:
        return None
    grades = [judged.get(doc_id, 0) for doc_id in ranking[:k]]
    return dcg_at_k(grades, k) / idcg


def recall_at_k(ranking: Sequence[str], judged: Mapping[str, int],
                k: int) -> float | None:
    """Fraction of relevant (grade >= 1) documents in the top k, or None
    when the query has no relevant documents."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = {doc_id for doc_id, rel in judged.items() if rel >= 1}
    if not relevant:
        return None
    hits = sum(1 for doc_id in ranking[:k] if doc_id in relevant)
    return hits / len(relevant)


def weighted_ndcg_from_stats(stats: Iterable[tuple[float, float]]) -> float:
    """Aggregate per-query (ndcg, idcg) pairs, weighting each query by
    its share of the total ideal gain.  Weights sum to 1 by construction;
    an empty or all-zero input has no defined value and raises."""
    pairs = list(stats)
    total_idcg = sum(idcg for _, idcg in pairs)
    if not pairs or total_idcg <= 0.0:
        raise ValueError("weighted nDCG undefined without evaluable queries")
    return sum(ndcg * idcg for ndcg, idcg in pairs) / total_idcg


def weighted_ndcg(rankings: Mapping[str, Sequence[str]],
                  qrels: Mapping[str, Mapping[str, int]], k: int) -> float:
    """IDCG-weighted nDCG across queries; non-evaluable queries are
    excluded from both the numerator and the weight mass."""
    stats: list[tuple[float, float]] = []
    for query_id in sorted(rankings):
        judged = qrels.get(query_id)
        if not judged:
            continue
        value = ndcg_at_k(rankings[query_id], judged, k)
        if value is None:
            continue
        stats.append((value, ideal_dcg(judged, k)))
    return weighted_ndcg_from_stats(stats)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


def qrels_by_query(judgments: Iterable[Judgment]) -> dict[str, dict[str, int]]:
    grouped: dict[str, dict[str, int]] = {}
    for j in judgments:
        grouped.setdefault(j.query_id, {})[j.doc_id] = j.relevance
    return grouped


def run_rankings(entries: Iterable[RunEntry]) -> dict[str, list[str]]:
    """Ranked doc ids per query, in rank order."""
    grouped: dict[str, list[RunEntry]] = {}
    for entry in entries:
        grouped.setdefault(entry.query_id, []).append(entry)
    return {query_id: [e.doc_id for e in sorted(group, key=lambda e: e.rank)]
            for query_id, group in grouped.items()}


def load_group_map(path: str | os.PathLike[str]) -> dict[str, str]:
    """TSV of ``query_id<TAB>group`` rows."""
    groups: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not all(fields):
                raise DataError("expected 'query_id<TAB>group'", path, lineno)
            if fields[0] in groups:
                raise DataError(f"duplicate group entry for {fields[0]!r}",
                                path, lineno)
            groups[fields[0]] = fields[1]
    return groups


@dataclass
class EvalReport:
    """Full evaluation output; ``skipped`` maps query_id -> reason."""

    k: int
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    per_group: dict[str, dict[str, float]] = field(default_factory=dict)
    overall: dict[str, float] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        blob = {
            "k": self.k,
            "num_queries": len(self.per_query) + len(self.skipped),
            "num_evaluable": len(self.per_query),
            "overall": self.overall,
            "per_group": self.per_group,
            "per_query": self.per_query,
            "skipped": self.skipped,
        }
        return json.dumps(blob, sort_keys=True, indent=2) + "\n"

    def per_query_tsv(self) -> str:
        lines = ["query_id\tndcg_at_k\trecall_at_k\tidcg\n"]
        for query_id in sorted(self.per_query):
            row = self.per_query[query_id]
            lines.append(
                f"{query_id}\t{row['ndcg_at_k']:.6f}\t{row['recall_at_k']:.6f}"
                f"\t{row['idcg']:.6f}\n")
        return "".join(lines)


def evaluate_run(entries: Iterable[RunEntry], judgments: Iterable[Judgment],
                 groups: Mapping[str, str] | None = None,
                 k: int = 10) -> EvalReport:
    """Score a run against judgments.

    Run queries with no judgments at all are skipped with a reason (a
    likely id mismatch the caller should hear about); judged-but-
    all-zero queries are skipped because their metrics are undefined.
    """
    rankings = run_rankings(entries)
    qrels = qrels_by_query(judgments)
    report = EvalReport(k=k)
    stats: list[tuple[float, float]] = []
    grouped: dict[str, list[tuple[float, float]]] = {}

    for query_id in sorted(rankings):
        judged = qrels.get(query_id)
        if judged is None:
            report.skipped[query_id] = "no judgments for query"
            continue
        ndcg = ndcg_at_k(rankings[query_id], judged, k)
        recall = recall_at_k(rankings[query_id], judged, k)
        if ndcg is None or recall is None:
            report.skipped[query_id] = "no positive judgments"
            continue
        idcg = ideal_dcg(judged, k)
        report.per_query[query_id] = {
            "ndcg_at_k": ndcg, "recall_at_k": recall, "idcg": idcg}
        stats.append((ndcg, idcg))
        if groups is not None:
            grouped.setdefault(groups.get(query_id, "ungrouped"), []).append(
                (ndcg, recall))

    if report.per_query:
        n = len(report.per_query)
        rows = report.per_query.values()
        report.overall = {
            "mean_ndcg": sum(r["ndcg_at_k"] for r in rows) / n,
            "weighted_ndcg": weighted_ndcg_from_stats(stats),
            "mean_recall": sum(r["recall_at_k"] for r in rows) / n,
        }
    for group in sorted(grouped):
        values = grouped[group]
        report.per_group[group] = {
            "ndcg_at_k": sum(v for v, _ in values) / len(values),
            "recall_at_k": sum(v for _, v in values) / len(values),
            "n": len(values),
        }
    return report


def evaluate(run_path: str | os.PathLike[str],
             qrels_path: str | os.PathLike[str],
             group_path: str | os.PathLike[str] | None = None,
             k: int = 10) -> EvalReport:
    groups = load_group_map(group_path) if group_path is not None else None
    return evaluate_run(load_run(run_path), load_qrels(qrels_path),
                        groups=groups, k=k)


def write_report(report: EvalReport, path: str | os.PathLike[str]) -> None:
    write_text_atomic(path, report.to_json())
