#!/usr/bin/env python3
"""Index a corpus, sweep the fusion weight over a grid, and report the
best setting by weighted nDCG.

Example:
    python scripts/run_lambda_sweep.py \
        --corpus tests/fixtures/e2e/corpus.jsonl \
        --queries tests/fixtures/e2e/queries.jsonl \
        --qrels tests/fixtures/e2e/qrels.tsv \
        --out-dir /tmp/sweep --grid 0:1:0.1
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from hybridoc.cli import main as engine


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--queries", required=True)
    parser.add_argument("--qrels", required=True)
    parser.add_argument("--groups", default=None)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--grid", default="0:1:0.1")
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--m", type=int, default=30)
    parser.add_argument("--lemma-map", dest="lemma_map", default=None)
    parser.add_argument("--stopwords", default=None)
    args = parser.parse_args(argv)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index_path = out_dir / "index.bin"

    resource_flags: list[str] = []
    if args.lemma_map:
        resource_flags += ["--lemma_map", args.lemma_map]
    if args.stopwords:
        resource_flags += ["--stopwords", args.stopwords]

    rc = engine(["index", "--corpus", args.corpus, "--out", str(index_path),
                 *resource_flags])
    if rc != 0:
        return rc
    sweep_args = ["sweep-lambda", args.grid, "--index", str(index_path),
                  "--queries", args.queries, "--qrels", args.qrels,
                  "--out-dir", str(out_dir), "--k", str(args.k),
                  "--m", str(args.m), *resource_flags]
    if args.groups:
        sweep_args += ["--groups", args.groups]
    rc = engine(sweep_args)
    if rc != 0:
        return rc

    metrics_path = out_dir / "sweep_metrics.tsv"
    rows = metrics_path.read_text(encoding="utf-8").splitlines()[1:]
    best = max(rows, key=lambda row: float(row.split("\t")[3]))
    weight, _, _, weighted, _ = best.split("\t")
    print(f"best lambda = {weight} (W-nDCG@{args.k} = {weighted}); "
          f"full table in {metrics_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
