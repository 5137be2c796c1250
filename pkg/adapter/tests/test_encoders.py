import numpy as np
import pytest

from vlm_adapter.config import AdapterConfig, AdapterError
from vlm_adapter.encoders import (MOCK_DIM, MOCK_VOCAB, MockEncoder,
                                  PageDecodeError, load_encoder,
                                  register_encoder)

from conftest import make_pages


def encoder(**kwargs) -> MockEncoder:
    return MockEncoder(AdapterConfig(**kwargs))


class TestMockDeterminism:
    def test_same_page_same_encoding(self, pages_dir):
        [page] = make_pages(pages_dir, 1)
        first = encoder().encode_page(page)
        second = encoder().encode_page(page)
        assert len(first) == len(second) == 1
        assert np.array_equal(first[0].vector, second[0].vector)
        assert first[0].logits == second[0].logits

    def test_content_not_filename_drives_the_encoding(self, tmp_path):
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        a.write_bytes(b"same bytes")
        b.write_bytes(b"same bytes")
        enc = encoder()
        assert np.array_equal(enc.encode_page(a)[0].vector,
                              enc.encode_page(b)[0].vector)

    def test_distinct_pages_distinct_encodings(self, pages_dir):
        pages = make_pages(pages_dir, 2)
        enc = encoder()
        one = enc.encode_page(pages[0])[0]
        two = enc.encode_page(pages[1])[0]
        assert not np.array_equal(one.vector, two.vector)

    def test_prompt_changes_the_encoding(self, pages_dir):
        [page] = make_pages(pages_dir, 1)
        base = encoder().encode_page(page)[0]
        keyed = encoder(
            prompt="What are the keywords of this document?"
        ).encode_page(page)[0]
        assert not np.array_equal(base.vector, keyed.vector)

    def test_query_and_page_streams_differ(self, tmp_path):
        # Same bytes through both entry points must not collide.
        page = tmp_path / "ledger.png"
        page.write_bytes(b"ledger")
        enc = encoder()
        from_text = enc.encode_text("ledger")[0]
        from_page = enc.encode_page(page)[0]
        assert not np.array_equal(from_text.vector, from_page.vector)

    def test_text_encoding_is_stable(self):
        enc = encoder()
        first = enc.encode_text("where is the total?")
        second = enc.encode_text("where is the total?")
        assert np.array_equal(first[0].vector, second[0].vector)
        assert first[0].logits == second[0].logits


class TestMockShape:
    def test_single_mode_one_chunk(self, pages_dir):
        [page] = make_pages(pages_dir, 1)
        chunks = encoder(mode="single").encode_page(page)
        assert len(chunks) == 1
        assert chunks[0].vector.shape == (MOCK_DIM,)

    def test_multi_mode_two_to_four_chunks(self, pages_dir):
        pages = make_pages(pages_dir, 8)
        enc = encoder(mode="multi")
        counts = {len(enc.encode_page(p)) for p in pages}
        assert counts <= {2, 3, 4}
        assert len(counts) > 1   # the chunk count actually varies

    def test_logits_positive_and_in_vocab(self, pages_dir):
        [page] = make_pages(pages_dir, 1)
        for chunk in encoder(mode="multi").encode_page(page):
            assert chunk.logits
            for token, value in chunk.logits.items():
                assert token in MOCK_VOCAB
                assert value > 0

    def test_missing_page_raises_decode_error(self, tmp_path):
        with pytest.raises(PageDecodeError, match="cannot read"):
            encoder().encode_page(tmp_path / "nope.png")

    def test_directory_raises_decode_error(self, tmp_path):
        with pytest.raises(PageDecodeError):
            encoder().encode_page(tmp_path)


class TestRegistry:
    def test_mock_is_bundled(self):
        enc = load_encoder(AdapterConfig(model="mock"))
        assert isinstance(enc, MockEncoder)

    def test_unknown_model_names_the_bundled_backends(self):
        with pytest.raises(AdapterError, match="'mock'"):
            load_encoder(AdapterConfig(model="colqwen-2b"))

    def test_register_encoder_round_trip(self):
        sentinel = object()
        register_encoder("stub-backend", lambda cfg: sentinel)
        try:
            assert load_encoder(
                AdapterConfig(model="stub-backend")) is sentinel
        finally:
            from vlm_adapter.encoders import ENCODER_FACTORIES
            del ENCODER_FACTORIES["stub-backend"]

    def test_register_requires_a_name(self):
        with pytest.raises(ValueError):
            register_encoder("", lambda cfg: None)
