"""Text normalisation, keyword counting and relative frequencies.

Every estimator in the package sees text only through :func:`tokenize`, so
query matching, advert scoring and click term-frequency all agree on what a
keyword is.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

from .errors import ConfigError

SUFFIXES = ("ing", "ed", "es", "s", "ly")
MIN_STEM = 3
MIN_TOKEN = 2

_SPLIT = re.compile(r"[^a-z0-9]+")


def load_stopwords(path=None) -> frozenset[str]:
    """Read a stopword file: one word per line, ``#`` starts a comment."""
    if path is None:
        text = resources.files("priplus").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    return frozenset(words)


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    return load_stopwords()


def stem(word: str) -> str:
    """Strip suffixes from ``word`` until none of the rules applies.

    One rule fires per pass (first match in ``SUFFIXES`` order) and only if at
    least ``MIN_STEM`` characters remain.
    """
    while True:
        for suffix in SUFFIXES:
            if word.endswith(suffix) and len(word) - len(suffix) >= MIN_STEM:
                word = word[: -len(suffix)]
                break
        else:
            return word


def fold(text: str) -> str:
    """Fold unicode to lowercase ASCII."""
    return unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii").lower()


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    if stopwords is None:
        stopwords = default_stopwords()
    tokens = []
    for raw in _SPLIT.split(fold(text)):
        if not raw or raw in stopwords:
            continue
        word = stem(raw)
        if len(word) < MIN_TOKEN or word in stopwords:
            continue
        tokens.append(word)
    return tokens


def stem_keywords(keywords: Iterable[str]) -> frozenset[str]:
    """Stems of a keyword list; multi-word entries are split like any text."""
    out = set()
    for kw in keywords:
        out.update(tokenize(kw))
    return frozenset(out)


def count_keywords(tokens: Iterable[str], dictionary) -> Counter:
    """Occurrence counts of ``tokens`` restricted to ``dictionary``."""
    if not dictionary:
        raise ConfigError("keyword dictionary is empty")
    return Counter(t for t in tokens if t in dictionary)


def relative_frequency(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    if total == 0:
        return {}
    return {w: c / total for w, c in counts.items()}
