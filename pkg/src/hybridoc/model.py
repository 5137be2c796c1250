"""Core record types and the on-disk formats shared across the engine.

Embedding dumps are JSON-lines: one document or query record per line,
with dense vectors as nested float arrays and raw logits as
``[token, value]`` pairs grouped per chunk.  Relevance judgments and
ranked runs are tab-separated.  Writers format floats with 9 significant
digits, which is enough to make load -> serialize -> load a fixed point.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

__all__ = [
    "DataError",
    "DenseRep",
    "DocumentRecord",
    "Judgment",
    "QueryRecord",
    "RunEntry",
    "SPARSE_MAX_ENTRIES",
    "SparseVec",
    "TokenLogits",
    "fmt_float",
    "load_corpus",
    "load_qrels",
    "load_queries",
    "load_run",
    "serialize_document",
    "serialize_query",
    "validate_document_record",
    "validate_query_record",
    "write_corpus",
    "write_qrels",
    "write_queries",
    "write_run",
    "write_text_atomic",
]

# Token -> raw logit for one pooled unit.  Dumps only ever contain
# positive finite values (the exporter clips at zero and drops the rest).
TokenLogits = dict[str, float]

# Lemma -> integer weight: the final sparse embedding of a record.
SparseVec = dict[str, int]

# Hard cap on sparse embedding size.  The quantizer truncates to this
# many entries and every downstream consumer may rely on the bound.
SPARSE_MAX_ENTRIES = 256

RELEVANCE_MIN = 0
RELEVANCE_MAX = 4

DENSE_KINDS = ("single", "multi")


class DataError(ValueError):
    """Malformed input data: bad dump line, duplicate id, broken run file."""

    def __init__(self, message: str, path: str | os.PathLike[str] | None = None,
                 line: int | None = None):
        prefix = ""
        if path is not None:
            prefix = str(path)
            if line is not None:
                prefix += f":{line}"
            prefix += ": "
        super().__init__(prefix + message)
        self.path = None if path is None else str(path)
        self.line = line


def fmt_float(value: float) -> str:
    """Render a float with 9 significant digits (round-trip stable)."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite float {value!r}")
    return format(value, ".9g")


def write_text_atomic(path: str | os.PathLike[str], text: str) -> None:
    """Write ``text`` to ``path`` via a temp file + rename in one step."""
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, target)


# ---------------------------------------------------------------------------
# Record types
# ---------------------------------------------------------------------------


@dataclass
class DenseRep:
    """Dense representation: one pooled vector or one vector per chunk.

    ``vectors`` is held as a 2-D float64 array (row per vector) so the
    similarity code can stay vectorized; ``kind`` is ``"single"`` or
    ``"multi"``.  Construction normalizes the storage but does not
    enforce value-level invariants -- loaded records flow through
    ``validate_document_record`` first, which reports violations as data
    instead of blowing up mid-parse.
    """

    kind: str
    vectors: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(0, 0) if arr.size == 0 else arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"dense vectors must be 2-D, got shape {arr.shape}")
        self.vectors = arr

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseRep):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.vectors, other.vectors)


@dataclass
class DocumentRecord:
    doc_id: str
    dense: DenseRep
    raw_logits: list[TokenLogits]
    metadata: dict[str, Any] | None = None


@dataclass
class QueryRecord:
    query_id: str
    text: str
    dense: DenseRep
    raw_logits: list[TokenLogits]
    metadata: dict[str, Any] | None = None


@dataclass(frozen=True)
class Judgment:
    """One graded relevance judgment (0 = not relevant .. 4 = perfect)."""

    query_id: str
    doc_id: str
    relevance: int


@dataclass(frozen=True)
class RunEntry:
    """One row of a ranked run: rank is 1-based and gapless per query."""

    query_id: str
    doc_id: str
    rank: int
    score: float


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _validate_embedding(ident: str, id_field: str, dense: DenseRep,
                        raw_logits: list[TokenLogits]) -> list[str]:
    problems: list[str] = []
    if not ident:
        problems.append(f"{id_field}: must be a non-empty string")
    if dense.kind not in DENSE_KINDS:
        problems.append(f"dense.kind: unknown kind {dense.kind!r}")
    if dense.count == 0:
        problems.append("dense.vectors: at least one vector required")
    else:
        if dense.dim == 0:
            problems.append("dense.vectors: vectors must have positive dimension")
        if dense.kind == "single" and dense.count != 1:
            problems.append(
                f"dense.vectors: kind 'single' requires exactly 1 vector, found {dense.count}")
        finite = np.isfinite(dense.vectors)
        if not finite.all():
            i, j = (int(x) for x in np.argwhere(~finite)[0])
            problems.append(f"dense.vectors[{i}][{j}]: non-finite vector component")
    if len(raw_logits) != dense.count:
        problems.append(
            f"raw_logits: length mismatch ({len(raw_logits)} chunks vs "
            f"{dense.count} dense vectors)")
    for i, chunk in enumerate(raw_logits):
        for token, value in chunk.items():
            if not token:
                problems.append(f"raw_logits[{i}]: empty token string")
            if not (isinstance(value, (int, float)) and not isinstance(value, bool)
                    and math.isfinite(value) and value > 0):
                problems.append(
                    f"raw_logits[{i}][{token!r}]: logit must be positive and finite, "
                    f"got {value!r}")
    return problems


def validate_document_record(record: DocumentRecord) -> list[str]:
    """Return one message per violated invariant (empty list = valid)."""
    return _validate_embedding(record.doc_id, "doc_id", record.dense, record.raw_logits)


def validate_query_record(record: QueryRecord) -> list[str]:
    return _validate_embedding(record.query_id, "query_id", record.dense,
                               record.raw_logits)


# ---------------------------------------------------------------------------
# Embedding dumps (JSON-lines)
# ---------------------------------------------------------------------------


def _require_str(obj: Mapping[str, Any], key: str, path: Any, line: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise DataError(f"field {key!r} must be a string", path, line)
    return value


def _checked_float(value: Any, what: str, path: Any, line: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DataError(f"{what} must be a number, got {value!r}", path, line)
    return float(value)


def _parse_dense(obj: Any, path: Any, line: int) -> DenseRep:
    if not isinstance(obj, dict):
        raise DataError("field 'dense' must be an object", path, line)
    kind = obj.get("kind")
    if kind not in DENSE_KINDS:
        raise DataError(f"dense.kind must be 'single' or 'multi', got {kind!r}",
                        path, line)
    rows = obj.get("vectors")
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise DataError("dense.vectors must be a list of float arrays", path, line)
    width = None
    for r, row in enumerate(rows):
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(
                f"dense.vectors[{r}] has {len(row)} components, expected {width}",
                path, line)
        for value in row:
            _checked_float(value, "dense vector component", path, line)
    return DenseRep(kind, [[float(v) for v in row] for row in rows])


def _parse_raw_logits(obj: Any, path: Any, line: int) -> list[TokenLogits]:
    if not isinstance(obj, list):
        raise DataError("field 'raw_logits' must be a list of chunks", path, line)
    chunks: list[TokenLogits] = []
    for c, chunk in enumerate(obj):
        if not isinstance(chunk, list):
            raise DataError(f"raw_logits[{c}] must be a list of [token, value] pairs",
                            path, line)
        logits: TokenLogits = {}
        for pair in chunk:
            if not (isinstance(pair, list) and len(pair) == 2
                    and isinstance(pair[0], str)):
                raise DataError(
                    f"raw_logits[{c}] entries must be [token, value] pairs",
                    path, line)
            token = pair[0]
            if token in logits:
                raise DataError(f"raw_logits[{c}]: duplicate token {token!r}",
                                path, line)
            logits[token] = _checked_float(pair[1], f"logit for {token!r}", path, line)
        chunks.append(logits)
    return chunks


def _parse_metadata(obj: Any, path: Any, line: int) -> dict[str, Any] | None:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise DataError("field 'metadata' must be an object", path, line)
    return obj


def _iter_jsonl(path: str | os.PathLike[str]) -> Iterable[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON ({exc.msg})", path, lineno) from exc
            if not isinstance(obj, dict):
                raise DataError("each line must hold one JSON object", path, lineno)
            yield lineno, obj


def load_corpus(path: str | os.PathLike[str]) -> list[DocumentRecord]:
    """Parse a document dump; structural errors abort with file:line."""
    records: list[DocumentRecord] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        doc_id = _require_str(obj, "doc_id", path, lineno)
        if doc_id in seen:
            raise DataError(f"duplicate doc_id {doc_id!r}", path, lineno)
        seen.add(doc_id)
        records.append(DocumentRecord(
            doc_id=doc_id,
            dense=_parse_dense(obj.get("dense"), path, lineno),
            raw_logits=_parse_raw_logits(obj.get("raw_logits"), path, lineno),
            metadata=_parse_metadata(obj.get("metadata"), path, lineno),
        ))
    return records


def load_queries(path: str | os.PathLike[str]) -> list[QueryRecord]:
    records: list[QueryRecord] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        query_id = _require_str(obj, "query_id", path, lineno)
        if query_id in seen:
            raise DataError(f"duplicate query_id {query_id!r}", path, lineno)
        seen.add(query_id)
        text = obj.get("text", "")
        if not isinstance(text, str):
            raise DataError("field 'text' must be a string", path, lineno)
        records.append(QueryRecord(
            query_id=query_id,
            text=text,
            dense=_parse_dense(obj.get("dense"), path, lineno),
            raw_logits=_parse_raw_logits(obj.get("raw_logits"), path, lineno),
            metadata=_parse_metadata(obj.get("metadata"), path, lineno),
        ))
    return records


def _json_str(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _dense_json(rep: DenseRep) -> str:
    rows = ",".join(
        "[" + ",".join(fmt_float(v) for v in row) + "]" for row in rep.vectors)
    return '{"kind":%s,"vectors":[%s]}' % (_json_str(rep.kind), rows)


def _logits_json(chunks: list[TokenLogits]) -> str:
    parts = []
    for chunk in chunks:
        pairs = ",".join(
            "[%s,%s]" % (_json_str(token), fmt_float(value))
            for token, value in sorted(chunk.items()))
        parts.append("[" + pairs + "]")
    return "[" + ",".join(parts) + "]"


def _metadata_json(metadata: dict[str, Any] | None) -> str:
    if metadata is None:
        return ""
    blob = json.dumps(metadata, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"))
    return ',"metadata":' + blob


def serialize_document(record: DocumentRecord) -> str:
    """One canonical dump line (no trailing newline)."""
    return '{"doc_id":%s,"dense":%s,"raw_logits":%s%s}' % (
        _json_str(record.doc_id), _dense_json(record.dense),
        _logits_json(record.raw_logits), _metadata_json(record.metadata))


def serialize_query(record: QueryRecord) -> str:
    return '{"query_id":%s,"text":%s,"dense":%s,"raw_logits":%s%s}' % (
        _json_str(record.query_id), _json_str(record.text),
        _dense_json(record.dense), _logits_json(record.raw_logits),
        _metadata_json(record.metadata))


def write_corpus(records: Iterable[DocumentRecord],
                 path: str | os.PathLike[str]) -> None:
    write_text_atomic(path, "".join(serialize_document(r) + "\n" for r in records))


def write_queries(records: Iterable[QueryRecord],
                  path: str | os.PathLike[str]) -> None:
    write_text_atomic(path, "".join(serialize_query(r) + "\n" for r in records))


# ---------------------------------------------------------------------------
# Judgments (TSV: query_id, doc_id, relevance)
# ---------------------------------------------------------------------------


def _tsv_rows(path: str | os.PathLike[str],
              n_fields: int) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise DataError(
                    f"expected {n_fields} tab-separated fields, got {len(fields)}",
                    path, lineno)
            yield lineno, fields


def load_qrels(path: str | os.PathLike[str]) -> list[Judgment]:
    judgments: list[Judgment] = []
    seen: set[tuple[str, str]] = set()
    for lineno, (query_id, doc_id, rel_text) in _tsv_rows(path, 3):
        try:
            relevance = int(rel_text)
        except ValueError as exc:
            raise DataError(f"relevance must be an integer, got {rel_text!r}",
                            path, lineno) from exc
        if not RELEVANCE_MIN <= relevance <= RELEVANCE_MAX:
            raise DataError(
                f"relevance {relevance} outside [{RELEVANCE_MIN}, {RELEVANCE_MAX}]",
                path, lineno)
        key = (query_id, doc_id)
        if key in seen:
            raise DataError(f"duplicate judgment for {query_id!r}/{doc_id!r}",
                            path, lineno)
        seen.add(key)
        judgments.append(Judgment(query_id, doc_id, relevance))
    return judgments


def write_qrels(judgments: Iterable[Judgment],
                path: str | os.PathLike[str]) -> None:
    rows = sorted(judgments, key=lambda j: (j.query_id, j.doc_id))
    write_text_atomic(path, "".join(
        f"{j.query_id}\t{j.doc_id}\t{j.relevance}\n" for j in rows))


# ---------------------------------------------------------------------------
# Runs (TSV: query_id, doc_id, rank, score)
# ---------------------------------------------------------------------------


def load_run(path: str | os.PathLike[str]) -> list[RunEntry]:
    """Load a ranked run, enforcing gapless ranks and non-increasing scores."""
    entries: list[RunEntry] = []
    for lineno, (query_id, doc_id, rank_text, score_text) in _tsv_rows(path, 4):
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError as exc:
            raise DataError(f"bad rank/score pair {rank_text!r}/{score_text!r}",
                            path, lineno) from exc
        if rank < 1:
            raise DataError(f"rank must be >= 1, got {rank}", path, lineno)
        if not math.isfinite(score):
            raise DataError(f"score must be finite, got {score_text!r}", path, lineno)
        entries.append(RunEntry(query_id, doc_id, rank, score))

    by_query: dict[str, list[RunEntry]] = {}
    for entry in entries:
        by_query.setdefault(entry.query_id, []).append(entry)
    for query_id, group in by_query.items():
        group = sorted(group, key=lambda e: e.rank)
        ranks = [e.rank for e in group]
        if ranks != list(range(1, len(group) + 1)):
            raise DataError(
                f"ranks for query {query_id!r} are not 1..{len(group)} without gaps",
                path)
        for prev, cur in zip(group, group[1:]):
            if cur.score > prev.score:
                raise DataError(
                    f"scores increase with rank for query {query_id!r} "
                    f"(rank {cur.rank})", path)
    return entries


def write_run(entries: Iterable[RunEntry], path: str | os.PathLike[str]) -> None:
    rows = sorted(entries, key=lambda e: (e.query_id, e.rank))
    write_text_atomic(path, "".join(
        f"{e.query_id}\t{e.doc_id}\t{e.rank}\t{fmt_float(e.score)}\n" for e in rows))
