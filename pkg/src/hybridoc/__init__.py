"""Hybrid sparse-dense retrieval engine for document embedding dumps."""

from .model import (DataError, DenseRep, DocumentRecord, Judgment, QueryRecord,
                    RunEntry, SparseVec, TokenLogits)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DenseRep",
    "DocumentRecord",
    "Judgment",
    "QueryRecord",
    "RunEntry",
    "SparseVec",
    "TokenLogits",
    "__version__",
]
