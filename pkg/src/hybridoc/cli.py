"""Command-line entry point tying the pipeline stages together.

Subcommands: validate, index, search, rerank, synth-demos, eval,
sweep-lambda.  Exit codes: 0 success, 1 data error, 2 usage error.
All artifacts are written atomically and are byte-identical across
repeated invocations with the same inputs, flags, and seed.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import clients as clients_mod
from . import demosynth, evalkit, fusion, rerank, sparsify, vecindex
from .config import CONFIG_KEYS, EngineConfig, load_config
from .model import (DataError, RunEntry, load_corpus, load_queries, load_run,
                    validate_document_record, validate_query_record,
                    write_run, write_text_atomic)

PROG = "hybridoc"


def _default_resource(name: str) -> Path:
    return Path(str(resources.files("hybridoc").joinpath("data", name)))


def _load_resources(cfg: EngineConfig) -> tuple[sparsify.LemmaMap,
                                                sparsify.StopwordSet]:
    lemma_path = cfg.lemma_map or _default_resource("lemmas_en.tsv")
    stop_path = cfg.stopwords or _default_resource("stopwords_en.txt")
    return sparsify.load_lemma_map(lemma_path), sparsify.load_stopwords(stop_path)


def _require_index(cfg: EngineConfig) -> str:
    if cfg.index is None:
        raise DataError(
            "an index snapshot is required (--index or config key 'index')")
    return cfg.index


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"grid must be 'start:stop:step', got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"non-numeric grid {text!r}") from exc
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(
            f"grid needs step > 0 and stop >= start, got {text!r}")
    values: list[float] = []
    i = 0
    while True:
        value = start + i * step
        if value > stop + 1e-9:
            break
        values.append(round(value, 10))
        i += 1
    return values


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_validate(args: argparse.Namespace, cfg: EngineConfig) -> int:
    total = 0
    for path in args.corpus or []:
        count = 0
        for record in load_corpus(path):
            for problem in validate_document_record(record):
                print(f"{path}: {record.doc_id}: {problem}")
                count += 1
        print(f"{path}: {count} violations")
        total += count
    for path in args.queries or []:
        count = 0
        for record in load_queries(path):
            for problem in validate_query_record(record):
                print(f"{path}: {record.query_id}: {problem}")
                count += 1
        print(f"{path}: {count} violations")
        total += count
    return 0 if total == 0 else 1


def _cmd_index(args: argparse.Namespace, cfg: EngineConfig) -> int:
    records = load_corpus(args.corpus)
    problems = [f"{r.doc_id}: {p}" for r in records
                for p in validate_document_record(r)]
    if problems:
        raise DataError(
            f"corpus failed validation ({len(problems)} violations): "
            + "; ".join(problems[:5]))
    lemmas, stopwords = _load_resources(cfg)
    sparse_vecs = [
        (r.doc_id, sparsify.sparsify_record(
            r.raw_logits, lemmas, stopwords,
            top_k=cfg.sparsify_top_k, scale=cfg.sparsify_scale))
        for r in records]
    index = vecindex.build_index(sparse_vecs)
    store = vecindex.build_dense_store((r.doc_id, r.dense) for r in records)
    vecindex.save_index(index, store, args.out, meta={
        "sparsify_top_k": cfg.sparsify_top_k,
        "sparsify_scale": cfg.sparsify_scale,
    })
    print(f"indexed {len(records)} documents -> {args.out}")
    return 0


def _search_runs(args: argparse.Namespace, cfg: EngineConfig,
                 weights: Sequence[float]) -> dict[float, list[RunEntry]]:
    index, store, meta = vecindex.load_index(_require_index(cfg))
    queries = load_queries(args.queries)
    lemmas, stopwords = _load_resources(cfg)
    # Query-side sparsification must match what the index was built with,
    # so the snapshot's recorded parameters win over the config here.
    top_k = int(meta.get("sparsify_top_k", cfg.sparsify_top_k))
    scale = float(meta.get("sparsify_scale", cfg.sparsify_scale))
    runs: dict[float, list[RunEntry]] = {}
    for weight in weights:
        fcfg = fusion.FusionConfig(dense_weight=weight,
                                   channel_k=cfg.channel_k, m=cfg.m)
        entries: list[RunEntry] = []
        for query in queries:
            ranked = fusion.retrieve_hybrid(
                query, index, store, lemmas, stopwords, fcfg,
                sparsify_top_k=top_k, sparsify_scale=scale)
            entries.extend(
                RunEntry(query.query_id, doc_id, rank, score)
                for rank, (doc_id, score) in enumerate(ranked, start=1))
        runs[weight] = entries
    return runs


def _cmd_search(args: argparse.Namespace, cfg: EngineConfig) -> int:
    if args.sweep_lambda is not None:
        if args.out_dir is None:
            raise DataError("--sweep-lambda requires --out-dir")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        runs = _search_runs(args, cfg, args.sweep_lambda)
        for weight, entries in runs.items():
            write_run(entries, out_dir / f"run_lambda_{weight:g}.tsv")
        print(f"wrote {len(runs)} runs -> {out_dir}")
        return 0
    if args.out is None:
        raise DataError("search requires --out")
    runs = _search_runs(args, cfg, [cfg.dense_weight])
    write_run(runs[cfg.dense_weight], args.out)
    print(f"searched -> {args.out}")
    return 0


def _cmd_rerank(args: argparse.Namespace, cfg: EngineConfig) -> int:
    if cfg.demo_pool is None:
        raise DataError("rerank requires a demo_pool (config key or flag)")
    if cfg.score_client is None:
        raise DataError("rerank requires a score_client (config key or flag)")
    entries = load_run(args.run)
    queries = {q.query_id: q for q in load_queries(args.queries)}
    _, store, _ = vecindex.load_index(_require_index(cfg))
    pool = rerank.load_demo_pool(cfg.demo_pool)
    try:
        client = clients_mod.create_endpoint(cfg.score_client)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    strategy = rerank.SelectionStrategy(kind=cfg.selection_strategy,
                                        k=cfg.demo_k, seed=cfg.seed)
    rankings = evalkit.run_rankings(entries)
    out_entries: list[RunEntry] = []
    for query_id in sorted(rankings):
        query = queries.get(query_id)
        if query is None:
            raise DataError(f"run references unknown query_id {query_id!r}")
        reranked = rerank.rerank_candidates(
            query, rankings[query_id], client, strategy, pool,
            doc_dense=store.vectors, instruction=args.instruction,
            parallelism=args.parallelism)
        out_entries.extend(
            RunEntry(query_id, doc_id, rank, score)
            for rank, (doc_id, score) in enumerate(reranked, start=1))
    write_run(out_entries, args.out)
    print(f"reranked {len(rankings)} queries -> {args.out}")
    return 0


def _cmd_synth_demos(args: argparse.Namespace, cfg: EngineConfig) -> int:
    if cfg.synth_clients is None:
        raise DataError("synth-demos requires synth_clients (config key or flag)")
    specs = [s.strip() for s in cfg.synth_clients.split(",") if s.strip()]
    try:
        endpoints = [clients_mod.create_endpoint(spec) for spec in specs]
        synth_cfg = demosynth.SynthConfig(
            temperature=args.temperature, top_p=args.top_p,
            confidence_threshold=args.confidence_threshold,
            reviewers_required=args.reviewers_required, seed=cfg.seed)
        if len(endpoints) != demosynth.JURY_SIZE:
            raise ValueError(
                f"synth_clients must list exactly {demosynth.JURY_SIZE} "
                f"endpoints, got {len(endpoints)}")
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    pairs = demosynth.load_pairs(args.pairs)
    lookup = demosynth.EmbeddingLookup.from_records(
        load_queries(args.queries), load_corpus(args.corpus))
    checkpoint = args.checkpoint or (args.out + ".checkpoint")
    pool, stats = demosynth.build_demo_pool(
        pairs, endpoints, synth_cfg, lookup, checkpoint_path=checkpoint,
        parallelism=args.parallelism)
    rerank.write_demo_pool(pool, args.out)
    demosynth.write_stats(stats, args.stats)
    rate = stats.acceptance_rate
    print(f"synthesized {stats.accepted_pairs}/{stats.total_pairs} pairs "
          f"(acceptance {'n/a' if rate is None else f'{rate:.3f}'}) "
          f"-> {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace, cfg: EngineConfig) -> int:
    report = evalkit.evaluate(args.run, args.qrels, args.groups, k=args.k)
    for query_id, reason in sorted(report.skipped.items()):
        print(f"warning: skipped {query_id}: {reason}", file=sys.stderr)
    evalkit.write_report(report, args.out)
    if args.per_query:
        write_text_atomic(args.per_query, report.per_query_tsv())
    if report.overall:
        print(f"evaluated {len(report.per_query)} queries: "
              f"W-nDCG@{report.k} = {report.overall['weighted_ndcg']:.4f} "
              f"-> {args.out}")
    else:
        print(f"no evaluable queries -> {args.out}")
    return 0


def _cmd_sweep_lambda(args: argparse.Namespace, cfg: EngineConfig) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = _search_runs(args, cfg, args.grid)
    metrics_rows: list[str] = []
    for weight in args.grid:
        run_path = out_dir / f"run_lambda_{weight:g}.tsv"
        write_run(runs[weight], run_path)
        if args.qrels:
            report = evalkit.evaluate(run_path, args.qrels, args.groups,
                                      k=args.k)
            overall = report.overall or {"mean_ndcg": float("nan"),
                                         "weighted_ndcg": float("nan"),
                                         "mean_recall": float("nan")}
            metrics_rows.append(
                f"{weight:g}\t{len(report.per_query)}"
                f"\t{overall['mean_ndcg']:.6f}"
                f"\t{overall['weighted_ndcg']:.6f}"
                f"\t{overall['mean_recall']:.6f}\n")
    if args.qrels:
        header = "lambda\tnum_evaluable\tmean_ndcg\tweighted_ndcg\tmean_recall\n"
        write_text_atomic(out_dir / "sweep_metrics.tsv",
                          header + "".join(metrics_rows))
    print(f"swept {len(args.grid)} lambda values -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", metavar="PATH", default=None,
                        help="config file (default: $HYBRIDOC_CONFIG)")
    types = {"lambda": float, "channel_k": int, "m": int, "demo_k": int,
             "seed": int, "sparsify.top_k": int, "sparsify.scale": float}
    for key, (attr, _) in CONFIG_KEYS.items():
        parent.add_argument(f"--{key}", dest=attr, metavar="VALUE",
                            type=types.get(key, str), default=None,
                            help=f"override config key '{key}'")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Hybrid sparse-dense retrieval over document embedding "
                    "dumps: validate, index, search, rerank, synthesize "
                    "demonstrations, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()

    p = sub.add_parser("validate", parents=[parent],
                       help="check dump files against the record invariants")
    p.add_argument("--corpus", action="append", metavar="PATH")
    p.add_argument("--queries", action="append", metavar="PATH")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("index", parents=[parent],
                       help="build a sparse+dense index snapshot")
    p.add_argument("--corpus", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=_cmd_index)

    # The index path rides on the shared --index config flag.
    p = sub.add_parser("search", parents=[parent],
                       help="run hybrid retrieval and emit a ranked run")
    p.add_argument("--queries", required=True, metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--sweep-lambda", metavar="A:B:STEP", type=_parse_grid,
                   default=None, help="emit one run per lambda in the grid")
    p.add_argument("--out-dir", metavar="DIR",
                   help="output directory for --sweep-lambda")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("rerank", parents=[parent],
                       help="rerank a run with the in-context scorer")
    p.add_argument("--run", required=True, metavar="PATH")
    p.add_argument("--queries", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--instruction", default=rerank.DEFAULT_INSTRUCTION)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("synth-demos", parents=[parent],
                       help="synthesize a demonstration pool with a "
                            "three-endpoint jury")
    p.add_argument("--pairs", required=True, metavar="PATH")
    p.add_argument("--queries", required=True, metavar="PATH")
    p.add_argument("--corpus", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--stats", required=True, metavar="PATH")
    p.add_argument("--checkpoint", metavar="PATH", default=None,
                   help="checkpoint path (default: <out>.checkpoint)")
    p.add_argument("--temperature", type=float, default=0.2)
    p.add_argument("--top-p", dest="top_p", type=float, default=0.95)
    p.add_argument("--confidence-threshold", dest="confidence_threshold",
                   type=float, default=0.8)
    p.add_argument("--reviewers-required", dest="reviewers_required",
                   type=int, default=2)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=_cmd_synth_demos)

    p = sub.add_parser("eval", parents=[parent],
                       help="score a run against graded judgments")
    p.add_argument("--run", required=True, metavar="PATH")
    p.add_argument("--qrels", required=True, metavar="PATH")
    p.add_argument("--groups", metavar="PATH", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--per-query", dest="per_query", metavar="PATH",
                   default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-lambda", parents=[parent],
                       help="emit runs (and metrics, given qrels) across a "
                            "lambda grid")
    p.add_argument("grid", type=_parse_grid, metavar="A:B:STEP")
    p.add_argument("--queries", required=True, metavar="PATH")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--qrels", metavar="PATH", default=None)
    p.add_argument("--groups", metavar="PATH", default=None)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_sweep_lambda)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides: dict[str, Any] = {
        attr: getattr(args, attr)
        for attr, _ in CONFIG_KEYS.values()
        if getattr(args, attr, None) is not None}
    try:
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except (DataError, clients_mod.EndpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
