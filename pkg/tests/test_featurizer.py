"""Tokenization and hashing-trick encoding."""

import numpy as np
import pytest

from harmkit.featurizer import FeatureConfig, batch_encode, encode, fnv1a64, tokenize


def fnv1a64_reference(data: bytes) -> int:
    """Independent FNV-1a oracle, written from the published constants."""
    h = 14695981039346656037
    for byte in data:
        h = ((h ^ byte) * 1099511628211) % 2**64
    return h


class TestTokenize:
    def test_whitespace_and_punctuation(self):
        assert tokenize("hello, world") == ["hello", ",", "world"]

    def test_empty(self):
        assert tokenize("") == []

    def test_mixed_script(self):
        # Hand-applied rule: both runs are word characters, split only on the space.
        assert tokenize("नमस्ते hello") == ["नमस्ते", "hello"]

    def test_punctuation_runs_are_single_tokens(self):
        assert tokenize("a!!b... c?!") == ["a", "!!", "b", "...", "c", "?!"]

    def test_digits_and_underscore_are_word_chars(self):
        assert tokenize("ab_1 2cd") == ["ab_1", "2cd"]


class TestHash:
    def test_matches_independent_implementation(self):
        rng = np.random.default_rng(5)
        words = ["", "a", "hello", "नमस्ते", "<url>"] + [
            "w" + str(int(x)) for x in rng.integers(0, 10**9, size=50)
        ]
        for word in words:
            assert fnv1a64(word.encode("utf-8")) == fnv1a64_reference(word.encode("utf-8"))

    def test_known_vector(self):
        # FNV-1a of empty input is the offset basis.
        assert fnv1a64(b"") == 14695981039346656037


class TestEncode:
    def test_truncation_to_max_tokens(self):
        cfg = FeatureConfig(max_tokens=512)
        doc = encode([f"t{i}" for i in range(600)], cfg)
        assert doc.length == 512
        assert len(doc.ids) == 512

    def test_empty(self):
        doc = encode([], FeatureConfig())
        assert doc.length == 0
        assert doc.ids.size == 0

    def test_hash_determinism_same_token(self):
        doc = encode(["same", "same"], FeatureConfig())
        assert doc.ids[0] == doc.ids[1]

    def test_truncation_prefix_property(self):
        rng = np.random.default_rng(11)
        tokens = [f"w{int(x)}" for x in rng.integers(0, 50, size=300)]
        full = encode(tokens, FeatureConfig(max_tokens=1000))
        cut = encode(tokens, FeatureConfig(max_tokens=40))
        assert np.array_equal(cut.ids, full.ids[:40])

    def test_id_range(self):
        rng = np.random.default_rng(13)
        cfg = FeatureConfig(hash_bits=9)
        for _ in range(50):
            tokens = [f"w{int(x)}" for x in rng.integers(0, 10**6, size=int(rng.integers(0, 30)))]
            doc = encode(tokens, cfg)
            assert np.all(doc.ids >= 0)
            assert np.all(doc.ids < 2**9)

    def test_bigrams_follow_unigrams(self):
        cfg1 = FeatureConfig(ngram=1)
        cfg2 = FeatureConfig(ngram=2)
        uni = encode(["a", "b", "c"], cfg1)
        both = encode(["a", "b", "c"], cfg2)
        assert both.length == 5  # 3 unigrams + 2 bigrams
        assert np.array_equal(both.ids[:3], uni.ids)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FeatureConfig(max_tokens=0)
        with pytest.raises(ValueError):
            FeatureConfig(hash_bits=7)
        with pytest.raises(ValueError):
            FeatureConfig(hash_bits=23)
        with pytest.raises(ValueError):
            FeatureConfig(ngram=3)


class TestBatchEncode:
    def test_equals_per_doc_loop(self):
        # Oracle: the composition of tokenize and encode applied one document
        # at a time must match the batch call exactly.
        rng = np.random.default_rng(17)
        vocab = [f"word{i}" for i in range(80)] + [",", "!!", "..."]
        texts = [
            " ".join(vocab[int(i)] for i in rng.integers(0, len(vocab), size=int(rng.integers(0, 40))))
            for _ in range(1000)
        ]
        cfg = FeatureConfig(hash_bits=12, max_tokens=30)
        batched = batch_encode(texts, cfg)
        assert len(batched) == len(texts)
        for text, doc in zip(texts, batched):
            single = encode(tokenize(text), cfg)
            assert doc.length == single.length
            assert np.array_equal(doc.ids, single.ids)

    def test_empty_batch(self):
        assert batch_encode([], FeatureConfig()) == []
