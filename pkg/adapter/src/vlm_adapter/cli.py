"""Command-line entry point for the export pipeline.

Subcommands: export-corpus, export-queries.  Exit codes: 0 success,
1 data/model error, 2 usage error -- matching the engine CLI so the two
tools compose cleanly in scripts.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .config import CONFIG_KEYS, AdapterError, load_config, resolve_preset
from .export import export_corpus, export_queries

PROG = "vlm-adapter"

IMAGE_SUFFIXES = {".bmp", ".gif", ".jpeg", ".jpg", ".png", ".tif", ".tiff",
                  ".webp"}


def _expand_pages(paths: Sequence[str]) -> list[Path]:
    """Files pass through; directories expand to their image files in
    sorted order.  Missing paths pass through too -- the encoder reports
    them as decode failures so the export can continue."""
    pages: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            pages.extend(sorted(
                child for child in path.iterdir()
                if child.suffix.lower() in IMAGE_SUFFIXES))
        else:
            pages.append(path)
    return pages


def _load_texts(path: str) -> list[str]:
    with open(path, encoding="utf-8") as handle:
        return [line.rstrip("\n") for line in handle if line.strip()]


def _summary(stats, out: str) -> str:
    text = f"exported {stats.written} records -> {out}"
    if stats.skipped:
        text += f" ({len(stats.skipped)} skipped)"
    return text


def _cmd_export_corpus(args: argparse.Namespace, cfg) -> int:
    pages = _expand_pages(args.pages)
    stats = export_corpus(pages, cfg, args.out)
    print(_summary(stats, args.out))
    return 0


def _cmd_export_queries(args: argparse.Namespace, cfg) -> int:
    stats = export_queries(_load_texts(args.texts), cfg, args.out)
    print(_summary(stats, args.out))
    return 0


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", metavar="PATH", default=None,
                        help="config file (default: $VLM_ADAPTER_CONFIG)")
    types = {"raw_logit_cap": int, "batch_size": int,
             "prompt.preset": resolve_preset}
    for key, (attr, _) in CONFIG_KEYS.items():
        parent.add_argument(f"--{key}", dest=attr, metavar="VALUE",
                            type=types.get(key, str), default=None,
                            help=f"override config key '{key}'")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Export page images and query strings as hybridoc "
                    "embedding dumps (dense vectors + raw token logits).")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()

    p = sub.add_parser("export-corpus", parents=[parent],
                       help="encode page images into a corpus dump")
    p.add_argument("--pages", required=True, nargs="+", metavar="PATH",
                   help="page image files and/or directories of them")
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=_cmd_export_corpus)

    p = sub.add_parser("export-queries", parents=[parent],
                       help="encode query strings into a query dump")
    p.add_argument("--texts", required=True, metavar="PATH",
                   help="file with one query per line")
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=_cmd_export_queries)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="warning: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides: dict[str, Any] = {
        attr: getattr(args, attr)
        for attr, _ in CONFIG_KEYS.values()
        if getattr(args, attr, None) is not None}
    try:
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except (AdapterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
