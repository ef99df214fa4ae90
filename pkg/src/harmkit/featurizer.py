"""Hashing-trick featurization: text to fixed-vocabulary token-id sequences.

Tokens are hashed with FNV-1a (64-bit) and reduced modulo 2**hash_bits, so
encoding needs no fitted vocabulary, works for any script, and is identical
across runs and platforms. Sequences are head-truncated to max_tokens.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from itertools import groupby
from typing import Sequence

import numpy as np

# FNV-1a 64-bit constants (offset basis / prime).
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Joins the pieces of an n-gram before hashing; U+001F never survives
# tokenization, so joined n-grams cannot collide with single tokens.
_NGRAM_SEP = "\x1f"


@dataclass(frozen=True)
class FeatureConfig:
    """Encoding parameters; stored in checkpoints so predict matches train."""

    max_tokens: int = 512
    hash_bits: int = 15
    ngram: int = 1

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not 8 <= self.hash_bits <= 22:
            raise ValueError(f"hash_bits must be in 8..22, got {self.hash_bits}")
        if self.ngram not in (1, 2):
            raise ValueError(f"ngram must be 1 or 2, got {self.ngram}")

    @property
    def vocab_size(self) -> int:
        return 1 << self.hash_bits


@dataclass
class EncodedDoc:
    """Token ids for one document; length == len(ids) <= max_tokens."""

    ids: np.ndarray
    length: int


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=4096)
def _char_kind(ch: str) -> str:
    """'space', 'word' (letters, digits, combining marks, underscore), or 'punct'.

    Combining marks count as word characters so that scripts written with
    them (Devanagari, Bangla, ...) keep whole words together; the stdlib
    regex \\w would split them off.
    """
    if ch.isspace():
        return "space"
    if ch == "_" or unicodedata.category(ch)[0] in ("L", "N", "M"):
        return "word"
    return "punct"


def tokenize(text: str) -> list[str]:
    """Split on whitespace/punctuation boundaries; punctuation runs are single tokens."""
    return ["".join(run) for kind, run in groupby(text, key=_char_kind) if kind != "space"]


def _token_id(token: str, hash_bits: int) -> int:
    return fnv1a64(token.encode("utf-8")) & ((1 << hash_bits) - 1)


def encode(tokens: Sequence[str], cfg: FeatureConfig) -> EncodedDoc:
    """Hash tokens (plus adjacent bigrams when ngram=2), truncate to max_tokens.

    Bigram ids follow the unigram ids, so head truncation always keeps the
    leading unigrams first.
    """
    ids = [_token_id(tok, cfg.hash_bits) for tok in tokens]
    if cfg.ngram == 2:
        ids.extend(
            _token_id(a + _NGRAM_SEP + b, cfg.hash_bits)
            for a, b in zip(tokens, tokens[1:])
        )
    ids = ids[: cfg.max_tokens]
    return EncodedDoc(ids=np.asarray(ids, dtype=np.int64), length=len(ids))


def batch_encode(texts: Sequence[str], cfg: FeatureConfig) -> list[EncodedDoc]:
    """Tokenize and encode each text; order preserved."""
    return [encode(tokenize(text), cfg) for text in texts]
