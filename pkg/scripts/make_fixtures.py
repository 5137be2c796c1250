#!/usr/bin/env python3
"""Regenerate the end-to-end fixture world under tests/fixtures/e2e.

Builds a topic-structured synthetic corpus (200 docs, 20 queries), graded
judgments, scripted endpoint specs, and the golden artifacts for the full
index -> search -> synth-demos -> rerank -> eval chain.  Everything is
seeded, so reruns are byte-identical; the golden files double as
regression anchors for the CLI tests.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from hybridoc.cli import main as engine
from hybridoc.evalkit import qrels_by_query
from hybridoc.model import (DenseRep, DocumentRecord, Judgment, QueryRecord,
                            load_qrels, load_queries, load_run, write_corpus,
                            write_qrels, write_queries)

SEED = 20250823
DIM = 16
N_TOPICS = 20
DOCS_PER_TOPIC = 10

TERMS = [
    "invoice", "revenue", "margin", "ledger", "audit", "balance", "asset",
    "liability", "equity", "cash", "table", "figure", "chart", "diagram",
    "caption", "header", "footer", "column", "row", "cell", "contract",
    "clause", "signature", "appendix", "schedule", "exhibit", "policy",
    "premium", "claim", "deductible", "shipment", "freight", "customs",
    "tariff", "manifest", "carrier", "route", "warehouse", "inventory",
    "pallet", "patient", "dosage", "symptom", "diagnosis", "treatment",
    "referral", "clinic", "pathology", "scan", "summary", "total",
    "subtotal", "quarter", "fiscal", "forecast", "variance", "budget",
    "payroll", "vendor", "receipt",
]

# Inflected surface forms that the lemma table folds back to bank terms.
INFLECTIONS = {
    "invoices": "invoice", "tables": "table", "figures": "figure",
    "charts": "chart", "columns": "column", "rows": "row",
    "claims": "claim", "policies": "policy", "routes": "route",
    "scans": "scan", "totals": "total", "receipts": "receipt",
    "vendors": "vendor", "assets": "asset", "forecasts": "forecast",
}

STOPWORDS = ["the", "a", "of", "and", "in", "for", "to", "on"]
JUNK = ["##", "''", "12"]  # no alphabetic characters -> always filtered

PASS_POS = (3.0, -3.0)
PASS_NEG = (-3.0, 3.0)


def surface_form(rng: np.random.Generator, term: str) -> str:
    """Sometimes emit an inflected or capitalized variant of a term."""
    variants = [s for s, base in INFLECTIONS.items() if base == term]
    roll = rng.random()
    if variants and roll < 0.3:
        return variants[0]
    if roll > 0.85:
        return term.capitalize()
    return term


def build_world(rng: np.random.Generator):
    topic_terms = []
    shuffled = list(TERMS)
    rng.shuffle(shuffled)
    for t in range(N_TOPICS):
        topic_terms.append(shuffled[3 * t:3 * t + 3])
    topic_axes = rng.normal(size=(N_TOPICS, DIM))
    topic_axes /= np.linalg.norm(topic_axes, axis=1, keepdims=True)

    docs = []
    for i in range(N_TOPICS * DOCS_PER_TOPIC):
        topic = i % N_TOPICS
        logits: dict[str, float] = {}
        # drop one topic term now and then so the sparse channel is
        # strong but not infallible
        kept = [t for t in topic_terms[topic] if rng.random() > 0.3]
        for term in kept or topic_terms[topic][:1]:
            logits[surface_form(rng, term)] = float(rng.uniform(2.0, 5.0))
        for term in rng.choice(TERMS, size=8, replace=False):
            logits.setdefault(str(term), float(rng.uniform(0.1, 2.5)))
        logits[str(rng.choice(STOPWORDS))] = float(rng.uniform(1.0, 4.0))
        if rng.random() < 0.25:
            logits[str(rng.choice(JUNK))] = float(rng.uniform(0.5, 3.0))
        dense = topic_axes[topic] + 0.2 * rng.normal(size=DIM)
        docs.append(DocumentRecord(
            doc_id=f"doc{i:04d}",
            dense=DenseRep("single", [dense]),
            raw_logits=[logits],
        ))

    queries = []
    for t in range(N_TOPICS):
        picks = rng.choice(3, size=2, replace=False)
        logits = {topic_terms[t][p]: float(rng.uniform(2.0, 5.0))
                  for p in picks}
        logits[str(rng.choice(TERMS))] = float(rng.uniform(0.1, 1.0))
        dense = topic_axes[t] + 0.25 * rng.normal(size=DIM)
        queries.append(QueryRecord(
            query_id=f"qry{t:02d}",
            text=f"which page covers {' and '.join(topic_terms[t][p] for p in picks)}?",
            dense=DenseRep("single", [dense]),
            raw_logits=[logits],
        ))

    # varied grade templates give queries different ideal gains, so the
    # IDCG-weighted aggregate genuinely differs from the plain mean
    grade_templates = [
        [4, 3, 2, 2, 1, 1, 0, 0, 0, 0],
        [3, 2, 1, 1, 0, 0, 0, 0, 0, 0],
        [4, 4, 3, 2, 2, 1, 1, 0, 0, 0],
        [2, 1, 1, 1, 0, 0, 0, 0, 0, 0],
    ]
    judgments = []
    for t, query in enumerate(queries):
        if t == N_TOPICS - 1:
            # one query judged but with no positive grade: exercised by
            # the eval skip path
            for j in range(5):
                judgments.append(Judgment(query.query_id,
                                          f"doc{(j * N_TOPICS + t):04d}", 0))
            continue
        topic_docs = [f"doc{(j * N_TOPICS + t):04d}"
                      for j in range(DOCS_PER_TOPIC)]
        for doc_id, grade in zip(topic_docs, grade_templates[t % 4]):
            judgments.append(Judgment(query.query_id, doc_id, grade))
        off_topic = f"doc{(t + 7) % N_TOPICS:04d}"
        if off_topic not in topic_docs:
            judgments.append(Judgment(query.query_id, off_topic, 0))
    return docs, queries, judgments


def write_inputs(root: Path, docs, queries, judgments) -> None:
    write_corpus(docs, root / "corpus.jsonl")
    write_queries(queries, root / "queries.jsonl")
    write_qrels(judgments, root / "qrels.tsv")
    groups = []
    labels = ["tables", "figures", "prose"]
    for t, query in enumerate(queries):
        if query.query_id == "qry18":
            continue  # left ungrouped on purpose
        groups.append(f"{query.query_id}\t{labels[t % 3]}\n")
    (root / "groups.tsv").write_text("".join(groups), encoding="utf-8")
    (root / "lemmas.tsv").write_text(
        "".join(f"{s}\t{b}\n" for s, b in sorted(INFLECTIONS.items())),
        encoding="utf-8")
    (root / "stopwords.txt").write_text(
        "".join(w + "\n" for w in STOPWORDS), encoding="utf-8")


def write_pairs_and_jury(root: Path, queries, judgments) -> None:
    qrels = qrels_by_query(judgments)
    rows = []
    for t in range(6):
        query = queries[t]
        judged = qrels[query.query_id]
        positive = max(sorted(judged), key=lambda d: judged[d])
        negative = next(d for d, g in sorted(judged.items()) if g == 0)
        rows.append((query.text, positive, negative))
    (root / "pairs.tsv").write_text(
        "".join(f"{q}\t{p}\t{n}\n" for q, p, n in rows), encoding="utf-8")

    scores = []
    for i, (q, pos, neg) in enumerate(rows):
        yes, no = PASS_POS
        scores.append({"query": q, "doc_ref": pos, "yes": yes, "no": no})
        # pair 4 is scripted to fail verification on the negative side
        yes, no = PASS_NEG if i != 4 else PASS_POS
        scores.append({"query": q, "doc_ref": neg, "yes": yes, "no": no})
    endpoints = root / "endpoints"
    endpoints.mkdir(exist_ok=True)
    # pair 5's proposer is jury2, so a veto from both peers (jury0, jury1)
    # fails consensus for its positive chain
    veto_q, veto_pos, _ = rows[5]
    for i in range(3):
        spec = {"scores": scores}
        if i in (0, 1):
            spec["reject"] = [{"query": veto_q, "doc_ref": veto_pos,
                               "label": "relevant"}]
        (endpoints / f"jury{i}.json").write_text(
            json.dumps(spec, indent=2) + "\n", encoding="utf-8")


def write_scorer(root: Path, run_path: Path) -> None:
    """Scripted reranker scores: tilted toward the judged grade so the
    reranked run is a genuine improvement over first-stage order."""
    rng = np.random.default_rng(SEED + 1)
    qrels = qrels_by_query(load_qrels(root / "qrels.tsv"))
    queries = {q.query_id: q.text
               for q in load_queries(root / "queries.jsonl")}
    scores = []
    for entry in load_run(run_path):
        grade = qrels.get(entry.query_id, {}).get(entry.doc_id, 0)
        yes = 1.1 * grade + float(rng.normal(0.0, 0.4))
        no = 2.0 - 0.8 * grade + float(rng.normal(0.0, 0.4))
        scores.append({"query": queries[entry.query_id],
                       "doc_ref": entry.doc_id,
                       "yes": round(yes, 4), "no": round(no, 4)})
    (root / "endpoints" / "scorer.json").write_text(
        json.dumps({"default_score": [-2.0, 2.0], "scores": scores},
                   indent=2) + "\n", encoding="utf-8")


def run_pipeline(root: Path) -> None:
    golden = root / "golden"
    golden.mkdir(exist_ok=True)
    flags = ["--lemma_map", str(root / "lemmas.tsv"),
             "--stopwords", str(root / "stopwords.txt")]
    rc = engine(["index", "--corpus", str(root / "corpus.jsonl"),
                 "--out", str(golden / "index.bin"), *flags])
    assert rc == 0, "index failed"
    rc = engine(["search", "--index", str(golden / "index.bin"),
                 "--queries", str(root / "queries.jsonl"),
                 "--out", str(golden / "run_search.tsv"),
                 "--lambda", "0.8", "--m", "10", *flags])
    assert rc == 0, "search failed"

    write_scorer(root, golden / "run_search.tsv")

    jury = ",".join(f"mock:{root / 'endpoints' / f'jury{i}.json'}"
                    for i in range(3))
    rc = engine(["synth-demos", "--pairs", str(root / "pairs.tsv"),
                 "--queries", str(root / "queries.jsonl"),
                 "--corpus", str(root / "corpus.jsonl"),
                 "--out", str(golden / "pool.jsonl"),
                 "--stats", str(golden / "synth_stats.json"),
                 "--synth_clients", jury])
    assert rc == 0, "synth-demos failed"

    rc = engine(["rerank", "--run", str(golden / "run_search.tsv"),
                 "--queries", str(root / "queries.jsonl"),
                 "--index", str(golden / "index.bin"),
                 "--out", str(golden / "reranked.tsv"),
                 "--demo_pool", str(golden / "pool.jsonl"),
                 "--score_client",
                 f"mock:{root / 'endpoints' / 'scorer.json'}",
                 "--selection_strategy", "similar"])
    assert rc == 0, "rerank failed"

    rc = engine(["eval", "--run", str(golden / "reranked.tsv"),
                 "--qrels", str(root / "qrels.tsv"),
                 "--groups", str(root / "groups.tsv"), "--k", "10",
                 "--out", str(golden / "report.json"),
                 "--per-query", str(golden / "per_query.tsv")])
    assert rc == 0, "eval failed"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=Path,
                        default=Path(__file__).resolve().parent.parent
                        / "tests" / "fixtures" / "e2e")
    args = parser.parse_args(argv)
    root = args.root
    root.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(SEED)
    docs, queries, judgments = build_world(rng)
    write_inputs(root, docs, queries, judgments)
    write_pairs_and_jury(root, queries, judgments)
    run_pipeline(root)

    report = json.loads((root / "golden" / "report.json").read_text())
    print(f"fixture root: {root}")
    print(f"  docs={len(docs)} queries={len(queries)} "
          f"judgments={len(judgments)}")
    print(f"  reranked W-nDCG@10 = {report['overall']['weighted_ndcg']:.4f} "
          f"over {report['num_evaluable']} evaluable queries")
    for path in sorted(root.rglob("*")):
        if path.is_file():
            print(f"  {path.relative_to(root)}  ({path.stat().st_size} B)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
