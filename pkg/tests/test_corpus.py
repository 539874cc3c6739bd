"""Tokenizer, keyword filter, TF-IDF and invite-link extraction."""

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pumpsnn.corpus import (
    Message,
    SparseVector,
    default_lexicon,
    extract_invite_links,
    fit_vocabulary,
    keyword_filter,
    read_messages,
    snowball,
    tfidf_matrix,
    tfidf_transform,
    tokenize,
    write_messages,
)
from pumpsnn.errors import EmptyCorpus

TEXT = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80)


class TestTokenize:
    @pytest.mark.parametrize("text, expected", [
        ("Buy $FIC now!! https://t.me/x", ["buy", "fic", "now"]),
        ("", []),
        ("The next message will be the coin name!", ["next", "message", "coin", "name"]),
        ("🚀🚀 GO 🚀", ["go"]),
        ("visit www.example.com or t.me/abc today", ["visit", "today"]),
        ("target 2x, hold 100", ["target", "2x", "hold", "100"]),
    ])
    def test_examples(self, text, expected):
        assert tokenize(text) == expected

    @given(TEXT)
    def test_idempotent(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once

    @given(TEXT)
    def test_tokens_clean(self, text):
        for tok in tokenize(text):
            assert tok == tok.lower()
            assert not any(c.isspace() for c in tok)
            assert all(c.isalnum() for c in tok)


class TestKeywordFilter:
    LEX = default_lexicon()

    @pytest.mark.parametrize("text, keep", [
        ("big PUMP tonight on binance", True),
        ("good morning everyone", False),
        ("hold your coins, target 2x", True),
        ("pumpkin pie recipe", False),  # token match, not substring
    ])
    def test_examples(self, text, keep):
        assert keyword_filter(Message("c", 1, 10, text), self.LEX) is keep

    @given(TEXT, st.sets(st.sampled_from(["pump", "moon", "fic", "coin", "morning"])),
           st.sets(st.sampled_from(["hold", "sell", "everyone", "tonight"])))
    def test_monotone_in_lexicon(self, text, small, extra):
        small = frozenset(small)
        if keyword_filter(text, small):
            assert keyword_filter(text, small | frozenset(extra))

    def test_coin_symbols_join_lexicon(self):
        assert not keyword_filter("FIC is next", default_lexicon())
        assert keyword_filter("FIC is next", default_lexicon(["FIC"]))


class TestVocabulary:
    DOCS = [["pump", "coin"], ["sell", "coin"]]

    def test_min_df_one(self):
        v = fit_vocabulary(self.DOCS, min_df=1)
        assert dict(v.term_to_index) == {"coin": 0, "pump": 1, "sell": 2}
        assert v.doc_freq.tolist() == [2, 1, 1]
        assert v.n_docs == 2

    def test_min_df_two(self):
        assert dict(fit_vocabulary(self.DOCS, min_df=2).term_to_index) == {"coin": 0}

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            fit_vocabulary([])

    def test_bad_min_df(self):
        with pytest.raises(ValueError):
            fit_vocabulary(self.DOCS, min_df=0)

    def test_recount_oracle(self):
        rng = np.random.default_rng(3)
        words = [f"w{i}" for i in range(60)]
        docs = [list(rng.choice(words, size=rng.integers(1, 12))) for _ in range(1000)]
        v = fit_vocabulary(docs, min_df=3)
        df = {}
        for d in docs:
            for w in set(d):
                df[w] = df.get(w, 0) + 1
        kept = {w: c for w, c in df.items() if c >= 3}
        assert set(v.term_to_index) == set(kept)
        assert sorted(v.term_to_index.values()) == list(range(len(kept)))
        for w, c in kept.items():
            assert v.doc_freq[v.term_to_index[w]] == c
        assert np.all((v.doc_freq >= 1) & (v.doc_freq <= v.n_docs))

    def test_round_trip(self):
        v = fit_vocabulary(self.DOCS, min_df=1)
        from pumpsnn.corpus import TfidfVocabulary
        w = TfidfVocabulary.from_dict(v.to_dict())
        assert w.digest() == v.digest()
        np.testing.assert_array_equal(w.idf, v.idf)


class TestTfidf:
    VOCAB = fit_vocabulary([["pump", "coin"], ["sell", "coin"]], min_df=1)

    def test_hand_computed(self):
        v = tfidf_transform(["pump", "coin"], self.VOCAB)
        pump = 0.5 * (math.log(3 / 2) + 1)
        coin = 0.5 * (math.log(3 / 3) + 1)
        n = math.hypot(pump, coin)
        assert v.entries() == pytest.approx([(0, coin / n), (1, pump / n)])

    def test_all_oov(self):
        assert len(tfidf_transform(["zzz", "yyy"], self.VOCAB)) == 0
        assert len(tfidf_transform([], self.VOCAB)) == 0

    @given(st.lists(st.sampled_from(["pump", "coin", "sell", "oov"]), max_size=10))
    def test_unit_norm_or_empty(self, doc):
        v = tfidf_transform(doc, self.VOCAB)
        assert len(v) == 0 or v.norm() == pytest.approx(1.0)
        assert set(v.indices.tolist()) <= set(range(len(self.VOCAB)))

    def test_corpus_recount_oracle(self):
        # un-normalised tf-idf summed per term equals an independent recount
        rng = np.random.default_rng(7)
        words = [f"t{i}" for i in range(30)]
        docs = [list(rng.choice(words, size=rng.integers(1, 9))) for _ in range(500)]
        vocab = fit_vocabulary(docs, min_df=2)
        got = np.zeros(len(vocab))
        want = np.zeros(len(vocab))
        for d in docs:
            v = tfidf_transform(d, vocab)
            raw = {}
            for t, c in Counter(d).items():
                if t in vocab.term_to_index:
                    i = vocab.term_to_index[t]
                    df = sum(t in set(x) for x in docs)
                    raw[i] = c / len(d) * (math.log((1 + len(docs)) / (1 + df)) + 1)
            norm = math.sqrt(sum(x * x for x in raw.values())) if raw else 1.0
            for i, x in raw.items():
                want[i] += x / norm
            for i, x in v.entries():
                got[i] += x
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_matrix_rows_match_vectors(self):
        docs = [["pump", "coin"], ["oov"], ["sell", "sell", "coin"]]
        X = tfidf_matrix(docs, self.VOCAB).toarray()
        for row, d in zip(X, docs):
            dense = np.zeros(len(self.VOCAB))
            for i, w in tfidf_transform(d, self.VOCAB).entries():
                dense[i] = w
            np.testing.assert_array_equal(row, dense)


class TestSparseVector:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SparseVector(np.array([2, 1]), np.array([1.0, 1.0]))

    def test_rejects_zero_weight(self):
        with pytest.raises(ValueError):
            SparseVector(np.array([0, 1]), np.array([1.0, 0.0]))


class TestInviteLinks:
    def test_single(self):
        assert extract_invite_links(["join https://t.me/pumpers"]) == {"pumpers"}

    def test_empty(self):
        assert extract_invite_links([]) == set()

    def test_fixture_three_handles(self):
        msgs = [Message("seed", i + 1, 100 + i, t) for i, t in enumerate([
            "hello", "join https://t.me/alpha", "t.me/joinchat/beta now", "again t.me/alpha",
            "no link", "https://telegram.me/+gamma", "more chatter", "t.me/beta", "bye", "pump soon",
        ])]
        assert extract_invite_links(msgs) == {"alpha", "beta", "gamma"}

    def test_snowball_rounds(self):
        dumps = {
            "a": [Message("a", 1, 1, "see t.me/b and t.me/c")],
            "b": [Message("b", 1, 1, "t.me/d")],
            "c": [Message("c", 1, 1, "t.me/a")],
        }
        assert snowball(["a"], dumps) == [{"a"}, {"b", "c"}, {"d"}]


class TestMessageIO:
    def test_round_trip(self, tmp_path):
        msgs = [Message("c1", 1, 100, "pump 🚀"), Message("c2", 1, 200, "hi")]
        write_messages(tmp_path / "m.jsonl", msgs)
        assert read_messages(tmp_path / "m.jsonl") == msgs

    def test_duplicate_id(self, tmp_path):
        write_messages(tmp_path / "m.jsonl", [Message("c1", 1, 100, "a"), Message("c1", 1, 200, "b")])
        with pytest.raises(ValueError):
            read_messages(tmp_path / "m.jsonl")

    def test_timestamp_positive(self):
        with pytest.raises(ValueError):
            Message("c", 1, 0, "x")
