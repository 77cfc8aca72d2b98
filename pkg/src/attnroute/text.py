"""Hashed bag-of-words text encoding shared by the backbone and the router."""
from __future__ import annotations

import hashlib
import re
from functools import lru_cache

import numpy as np

_WORD = re.compile(r"[a-z0-9]+")

# function words and the X/Y placeholders used in anchor sentences
STOPWORDS = frozenset(
    "a an the to of with in into it its for from and or on at by is be this that x y".split()
)


def stable_hash(text: str, salt: str = "") -> int:
    """64-bit hash that does not depend on PYTHONHASHSEED."""
    digest = hashlib.blake2b(f"{salt}\x00{text}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower())


@lru_cache(maxsize=8192)
def _word_vector(word: str, dim: int, salt: str) -> np.ndarray:
    rng = np.random.default_rng(stable_hash(word, salt))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def word_vector(word: str, dim: int, salt: str = "word") -> np.ndarray:
    """Deterministic unit vector (float64) for one word."""
    return _word_vector(word, dim, salt)


def bag_of_words(text: str, dim: int, salt: str = "word", stopwords=frozenset()) -> np.ndarray:
    """L2-normalised sum of word vectors; all zeros for text with no words."""
    words = [w for w in tokenize(text) if w not in stopwords]
    out = np.zeros(dim)
    for w in words:
        out += word_vector(w, dim, salt)
    norm = np.linalg.norm(out)
    return out / norm if norm > 0 else out


class BagOfWordsText:
    """Callable text embedder: hashed bag of words, L2-normalised."""

    def __init__(self, dim: int = 256, salt: str = "clip-text", stopwords=STOPWORDS):
        self.dim, self.salt, self.stopwords = dim, salt, frozenset(stopwords)
        self.id = f"bow-{dim}-{salt}" + ("-stop" if self.stopwords else "")

    def __call__(self, text: str) -> np.ndarray:
        return bag_of_words(text, self.dim, self.salt, self.stopwords)
