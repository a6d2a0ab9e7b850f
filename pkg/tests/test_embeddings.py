import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cadtext.embeddings import (
    EmbeddingTable,
    SubwordInfo,
    TableFormatError,
    bow_vectorize,
    embed_string,
    embed_string_flagged,
    load_embedding_table,
    ngram_hashes,
    save_embedding_table,
    tokenize_wordpunct,
)


class TestTokenize:
    @pytest.mark.parametrize("s,expected", [
        ("pin-3", ["pin", "-", "3"]),
        ("gear", ["gear"]),
        ("m6x16", ["m6x16"]),
        ("a_b", ["a", "_", "b"]),
        ("top gear", ["top", "gear"]),
        ("x--y", ["x", "--", "y"]),
        ("", []),
    ])
    def test_examples(self, s, expected):
        assert tokenize_wordpunct(s) == expected

    @given(st.text(max_size=30))
    def test_no_empty_tokens_and_no_spaces(self, s):
        tokens = tokenize_wordpunct(s)
        assert all(tokens)
        assert all(not any(c.isspace() for c in t) for t in tokens)


class TestBow:
    def test_frequency_raw_counts(self):
        table = bow_vectorize(["gear gear pin", "rod pin"], "frequency")
        assert sorted(table.entries) == ["gear", "pin", "rod"]
        np.testing.assert_array_equal(embed_string("gear gear pin", table), [2.0, 1.0, 0.0])

    def test_ubiquitous_term_tfidf_zero(self):
        table = bow_vectorize(["x y", "x z"], "tfidf")
        np.testing.assert_array_equal(embed_string("x", table), np.zeros(3))

    def test_shared_corpus_all_zero_before_normalization(self):
        table = bow_vectorize(["a b", "b a"], "tfidf")
        for token in ("a", "b"):
            np.testing.assert_array_equal(table.entries[token], np.zeros(2))

    def test_tfidf_l2_normalized(self):
        table = bow_vectorize(["gear pin", "gear rod", "bar baz"], "tfidf")
        vec = embed_string("pin pin rod", table)
        assert math.isclose(np.linalg.norm(vec), 1.0, rel_tol=1e-9)
        # manual tf * ln(N/df), then L2
        idf = math.log(3 / 1)
        raw = np.zeros(len(table.entries))
        vocab = sorted(table.entries)
        raw[vocab.index("pin")] = 2 * idf
        raw[vocab.index("rod")] = 1 * idf
        np.testing.assert_allclose(vec, raw / np.linalg.norm(raw), atol=1e-7)

    def test_oov_contributes_nothing(self):
        table = bow_vectorize(["gear pin"], "frequency")
        np.testing.assert_array_equal(
            embed_string("gear unknown", table), embed_string("gear", table))

    def test_all_oov_flagged(self):
        table = bow_vectorize(["gear pin"], "frequency")
        vec, oov = embed_string_flagged("zzz qqq", table)
        assert oov
        np.testing.assert_array_equal(vec, np.zeros(table.dim))

    def test_empty_corpus_raises(self):
        with pytest.raises(ValueError):
            bow_vectorize([], "frequency")

    def test_bad_mode_raises(self):
        with pytest.raises(ValueError):
            bow_vectorize(["x"], "binary")


class TestEmbedString:
    def make_token_table(self):
        entries = {
            "gear": np.array([1.0, 0.0], dtype=np.float32),
            "pin": np.array([0.0, 2.0], dtype=np.float32),
        }
        return EmbeddingTable(dim=2, entries=entries, provenance="subword-skipgram",
                              subword=SubwordInfo(3, 6, 1000))

    def test_single_token_is_that_vector(self):
        table = EmbeddingTable(dim=2, entries={"gear": np.array([1.0, 3.0])},
                               provenance="external")
        np.testing.assert_array_equal(embed_string("gear", table), [1.0, 3.0])

    def test_mean_of_two_tokens(self):
        # no bucket rows stored, so composition reduces to the word vectors
        table = self.make_token_table()
        got = embed_string("gear pin", table)
        np.testing.assert_allclose(got, [0.5, 1.0])

    def test_external_whole_string_lookup(self):
        vec = np.arange(768, dtype=np.float32)
        table = EmbeddingTable(dim=768, entries={"coffee mug": vec}, provenance="external")
        np.testing.assert_array_equal(embed_string("coffee mug", table), vec)
        _, oov = embed_string_flagged("unseen thing", table)
        assert oov

    def test_order_invariance_of_pooling(self):
        table = self.make_token_table()
        np.testing.assert_array_equal(
            embed_string("gear pin", table), embed_string("pin gear", table))

    def test_subword_composition_for_oov(self):
        info = SubwordInfo(3, 4, 50)
        entries = {}
        for idx in ngram_hashes("gear", 3, 4, 50):
            entries[f"ng#{idx}"] = np.ones(2, dtype=np.float32)
        table = EmbeddingTable(dim=2, entries=entries, provenance="subword-skipgram",
                               subword=info)
        vec, oov = embed_string_flagged("gear", table)
        assert not oov
        assert np.all(vec != 0)


class TestTableIO:
    def make_table(self):
        rng = np.random.default_rng(0)
        entries = {
            "plain": rng.standard_normal(4).astype(np.float32),
            "with\ttab": rng.standard_normal(4).astype(np.float32),
            "with\nnewline": rng.standard_normal(4).astype(np.float32),
            "back\\slash": rng.standard_normal(4).astype(np.float32),
            "équerre": rng.standard_normal(4).astype(np.float32),
        }
        return EmbeddingTable(dim=4, entries=entries, provenance="external")

    def test_roundtrip_exact(self, tmp_path):
        table = self.make_table()
        path = tmp_path / "table.tsv"
        save_embedding_table(table, path)
        loaded = load_embedding_table(path)
        assert loaded.dim == table.dim
        assert loaded.provenance == table.provenance
        assert sorted(loaded.entries) == sorted(table.entries)
        for key in table.entries:
            np.testing.assert_allclose(loaded.entries[key], table.entries[key], atol=1e-6)

    def test_roundtrip_subword_metadata(self, tmp_path):
        table = EmbeddingTable(dim=2, entries={"tok": np.ones(2, dtype=np.float32)},
                               provenance="subword-skipgram", subword=SubwordInfo(3, 6, 99))
        path = tmp_path / "table.tsv"
        save_embedding_table(table, path)
        loaded = load_embedding_table(path)
        assert loaded.subword == SubwordInfo(3, 6, 99)
        assert loaded.provenance == "subword-skipgram"

    def test_wrong_component_count_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("#dim 768\nrow\t" + " ".join(["0.5"] * 767) + "\n", "utf-8")
        with pytest.raises(TableFormatError) as err:
            load_embedding_table(path)
        assert err.value.lineno == 2

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("row\t0.5\n", "utf-8")
        with pytest.raises(TableFormatError):
            load_embedding_table(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("#dim 1\nrow\tnan\n", "utf-8")
        with pytest.raises(TableFormatError) as err:
            load_embedding_table(path)
        assert err.value.lineno == 2

    def test_save_rejects_non_finite(self, tmp_path):
        table = EmbeddingTable(dim=1, entries={"x": np.array([np.inf], dtype=np.float32)})
        with pytest.raises(ValueError):
            save_embedding_table(table, tmp_path / "t.tsv")

    def test_large_table_loads(self, tmp_path):
        # scale sanity check, far below the real-data target but same path
        rng = np.random.default_rng(1)
        entries = {f"part {i}": rng.standard_normal(8).astype(np.float32)
                   for i in range(5000)}
        table = EmbeddingTable(dim=8, entries=entries, provenance="external")
        path = tmp_path / "big.tsv"
        save_embedding_table(table, path)
        assert len(load_embedding_table(path).entries) == 5000
