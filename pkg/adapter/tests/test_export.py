import logging

import numpy as np
import pytest

from vlm_adapter.config import AdapterConfig, AdapterError
from vlm_adapter.export import export_corpus, export_queries

from conftest import StubEncoder, chunk, make_pages, read_records


class TestCorpusExport:
    def test_three_pages_three_records(self, pages_dir, tmp_path):
        pages = make_pages(pages_dir, 3)
        out = tmp_path / "corpus.jsonl"
        stats = export_corpus(pages, AdapterConfig(), out)
        assert stats.written == 3 and stats.skipped == []
        records = read_records(out)
        assert [r["doc_id"] for r in records] == ["page00", "page01", "page02"]
        for record in records:
            assert record["dense"]["kind"] == "single"
            assert len(record["dense"]["vectors"]) == 1
            assert len(record["raw_logits"]) == 1
            assert record["metadata"]["source"].endswith(".png")
            for token, value in record["raw_logits"][0]:
                assert token and value > 0

    def test_output_order_follows_input_order(self, pages_dir, tmp_path):
        pages = make_pages(pages_dir, 4)
        out = tmp_path / "corpus.jsonl"
        export_corpus(list(reversed(pages)), AdapterConfig(), out)
        assert [r["doc_id"] for r in read_records(out)] == [
            "page03", "page02", "page01", "page00"]

    def test_batching_never_changes_the_bytes(self, pages_dir, tmp_path):
        pages = make_pages(pages_dir, 7)
        small = tmp_path / "small.jsonl"
        large = tmp_path / "large.jsonl"
        export_corpus(pages, AdapterConfig(batch_size=2), small)
        export_corpus(pages, AdapterConfig(batch_size=100), large)
        assert small.read_bytes() == large.read_bytes()

    def test_byte_identical_across_runs(self, pages_dir, tmp_path):
        pages = make_pages(pages_dir, 3)
        first = tmp_path / "first.jsonl"
        second = tmp_path / "second.jsonl"
        export_corpus(pages, AdapterConfig(), first)
        export_corpus(pages, AdapterConfig(), second)
        assert first.read_bytes() == second.read_bytes()

    def test_multi_mode_aligns_vectors_and_chunks(self, pages_dir, tmp_path):
        pages = make_pages(pages_dir, 5)
        out = tmp_path / "corpus.jsonl"
        export_corpus(pages, AdapterConfig(mode="multi"), out)
        for record in read_records(out):
            assert record["dense"]["kind"] == "multi"
            n = len(record["dense"]["vectors"])
            assert 2 <= n <= 4
            assert len(record["raw_logits"]) == n

    def test_unreadable_page_skipped_with_logged_id(self, pages_dir, tmp_path,
                                                    caplog):
        pages = make_pages(pages_dir, 2)
        pages.insert(1, pages_dir / "missing.png")
        out = tmp_path / "corpus.jsonl"
        with caplog.at_level(logging.WARNING, logger="vlm_adapter"):
            stats = export_corpus(pages, AdapterConfig(), out)
        assert stats.written == 2
        assert stats.skipped == ["missing"]
        assert "skipped missing" in caplog.text
        assert [r["doc_id"] for r in read_records(out)] == ["page00", "page01"]

    def test_duplicate_page_ids_rejected(self, tmp_path):
        a = tmp_path / "a" / "scan.png"
        b = tmp_path / "b" / "scan.png"
        for page in (a, b):
            page.parent.mkdir()
            page.write_bytes(b"x")
        with pytest.raises(AdapterError, match="duplicate page id 'scan'"):
            export_corpus([a, b], AdapterConfig(), tmp_path / "out.jsonl")

    def test_empty_page_list_writes_empty_file(self, tmp_path):
        out = tmp_path / "corpus.jsonl"
        stats = export_corpus([], AdapterConfig(), out)
        assert stats.written == 0
        assert out.read_bytes() == b""

    def test_invalid_config_rejected_up_front(self, tmp_path):
        with pytest.raises(AdapterError, match="raw_logit_cap"):
            export_corpus([], AdapterConfig(raw_logit_cap=8),
                          tmp_path / "out.jsonl")


class TestLogitClamping:
    def test_cap_keeps_the_largest_pairs(self, pages_dir, tmp_path):
        [page] = make_pages(pages_dir, 1)
        big = {f"tok{i:04d}": float(i % 700) + 0.5 for i in range(900)}
        stub = StubEncoder({"page00": [chunk(big)]})
        out = tmp_path / "corpus.jsonl"
        export_corpus([page], AdapterConfig(raw_logit_cap=256), out,
                      encoder=stub)
        [record] = read_records(out)
        pairs = record["raw_logits"][0]
        assert len(pairs) == 256
        kept = sorted(big.items(), key=lambda kv: (-kv[1], kv[0]))[:256]
        assert sorted(pairs) == sorted([t, v] for t, v in kept)

    def test_cap_applies_per_chunk(self, pages_dir, tmp_path):
        [page] = make_pages(pages_dir, 1)
        big = {f"tok{i:04d}": float(i + 1) for i in range(400)}
        stub = StubEncoder({"page00": [chunk(big), chunk(big)]})
        out = tmp_path / "corpus.jsonl"
        export_corpus([page], AdapterConfig(mode="multi", raw_logit_cap=256),
                      out, encoder=stub)
        [record] = read_records(out)
        assert [len(pairs) for pairs in record["raw_logits"]] == [256, 256]

    def test_non_positive_logits_dropped(self, pages_dir, tmp_path):
        [page] = make_pages(pages_dir, 1)
        stub = StubEncoder({"page00": [chunk(
            {"keep": 2.0, "zero": 0.0, "neg": -3.5})]})
        out = tmp_path / "corpus.jsonl"
        export_corpus([page], AdapterConfig(), out, encoder=stub)
        [record] = read_records(out)
        assert record["raw_logits"][0] == [["keep", 2.0]]


class TestQueryExport:
    def test_two_queries_two_records_with_stable_ids(self, tmp_path):
        out = tmp_path / "queries.jsonl"
        texts = ["where is the total?", "which chart shows growth?"]
        export_queries(texts, AdapterConfig(), out)
        records = read_records(out)
        assert [r["query_id"] for r in records] == ["q0000", "q0001"]
        assert [r["text"] for r in records] == texts
        again = tmp_path / "again.jsonl"
        export_queries(texts, AdapterConfig(), again)
        assert again.read_bytes() == out.read_bytes()

    def test_empty_list_writes_empty_file(self, tmp_path):
        out = tmp_path / "queries.jsonl"
        stats = export_queries([], AdapterConfig(), out)
        assert stats.written == 0
        assert out.read_bytes() == b""

    def test_query_vectors_are_finite_floats(self, tmp_path):
        out = tmp_path / "queries.jsonl"
        export_queries(["q"], AdapterConfig(), out)
        [record] = read_records(out)
        row = np.array(record["dense"]["vectors"][0])
        assert np.isfinite(row).all()
