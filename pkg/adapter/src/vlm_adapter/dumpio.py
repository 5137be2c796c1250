"""Writer for the hybridoc embedding-dump format.

The adapter deliberately does not import the engine; this module
re-implements just the output side of the dump contract.  One JSON
object per line:

    {"doc_id": ..., "dense": {"kind": "single"|"multi",
     "vectors": [[...], ...]}, "raw_logits": [[["token", logit], ...],
     ...], "metadata": {...}}

Query lines carry ``query_id`` and ``text`` instead of ``doc_id``.
Logit pairs are token-sorted and floats rendered with 9 significant
digits, so identical inputs always serialize to identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Mapping, Sequence

from .config import AdapterError

__all__ = ["serialize_document", "serialize_query", "write_dump_atomic"]


def _fmt_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise AdapterError(f"cannot serialize non-finite float {value!r}")
    return format(value, ".9g")


def _json_str(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _dense_json(kind: str, vectors: Sequence[Sequence[float]]) -> str:
    rows = ",".join(
        "[" + ",".join(_fmt_float(v) for v in row) + "]" for row in vectors)
    return '{"kind":%s,"vectors":[%s]}' % (_json_str(kind), rows)


def _logits_json(chunks: Sequence[Mapping[str, float]]) -> str:
    parts = []
    for chunk in chunks:
        pairs = ",".join(
            "[%s,%s]" % (_json_str(token), _fmt_float(value))
            for token, value in sorted(chunk.items()))
        parts.append("[" + pairs + "]")
    return "[" + ",".join(parts) + "]"


def _metadata_json(metadata: Mapping[str, Any] | None) -> str:
    if metadata is None:
        return ""
    blob = json.dumps(metadata, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"))
    return ',"metadata":' + blob


def serialize_document(doc_id: str, kind: str,
                       vectors: Sequence[Sequence[float]],
                       chunks: Sequence[Mapping[str, float]],
                       metadata: Mapping[str, Any] | None = None) -> str:
    """One canonical corpus-dump line (no trailing newline)."""
    return '{"doc_id":%s,"dense":%s,"raw_logits":%s%s}' % (
        _json_str(doc_id), _dense_json(kind, vectors),
        _logits_json(chunks), _metadata_json(metadata))


def serialize_query(query_id: str, text: str, kind: str,
                    vectors: Sequence[Sequence[float]],
                    chunks: Sequence[Mapping[str, float]],
                    metadata: Mapping[str, Any] | None = None) -> str:
    return '{"query_id":%s,"text":%s,"dense":%s,"raw_logits":%s%s}' % (
        _json_str(query_id), _json_str(text), _dense_json(kind, vectors),
        _logits_json(chunks), _metadata_json(metadata))


def write_dump_atomic(path: str | os.PathLike[str],
                      lines: Sequence[str]) -> None:
    """Write dump lines via a temp file + rename in one step."""
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    os.replace(tmp, target)
