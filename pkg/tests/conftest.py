"""Shared builders for synthetic records used across the test modules."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from hybridoc.model import DenseRep, DocumentRecord, QueryRecord

FIXTURES = Path(__file__).parent / "fixtures"

# Filled by the acceptance module; echoed after the run so the checklist
# survives output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checklist")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dense(rng: np.random.Generator, kind: str = "single", count: int = 1,
               dim: int = 8) -> DenseRep:
    vectors = rng.normal(size=(count if kind == "multi" else 1, dim))
    return DenseRep(kind, vectors)


def make_logits(rng: np.random.Generator, vocab: list[str],
                size: int) -> dict[str, float]:
    tokens = rng.choice(len(vocab), size=min(size, len(vocab)), replace=False)
    return {vocab[t]: float(rng.uniform(0.05, 5.0)) for t in tokens}


def make_doc(rng: np.random.Generator, doc_id: str, vocab: list[str],
             dim: int = 8) -> DocumentRecord:
    return DocumentRecord(
        doc_id=doc_id,
        dense=make_dense(rng, dim=dim),
        raw_logits=[make_logits(rng, vocab, 12)],
    )


def make_query(rng: np.random.Generator, query_id: str, vocab: list[str],
               dim: int = 8) -> QueryRecord:
    return QueryRecord(
        query_id=query_id,
        text=f"synthetic query {query_id}",
        dense=make_dense(rng, dim=dim),
        raw_logits=[make_logits(rng, vocab, 6)],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
