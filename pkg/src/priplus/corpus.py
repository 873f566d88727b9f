"""Topic catalog, labelled advert corpus and the smoothed topic model.

The topic model stores raw keyword counts per topic and derives everything
else (smoothed frequencies, priors, ratio matrix) from them and ``lam``.
The corpus-level count of a word is the sum of its per-topic counts, and its
smoothed value is the sum of the per-topic smoothed counts, so that

    sum_i prior_i == 1            for every lam in [0, 1)

and, when every topic has the same raw keyword total, the PRI+ components of
any non-empty page sum to ``n_topics``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import configfile
from .errors import ConfigError
from .text import stem_keywords, tokenize

OTHER = "other"
LAMBDA_GRID = np.round(np.arange(0, 401) * 5e-4, 10)
# float noise in the loss must not break ties toward larger lambda
LOSS_TIE = 1e-15


@dataclass(frozen=True)
class Topic:
    id: int
    label: str
    keywords: tuple[str, ...]
    queries: tuple[str, ...] = ()
    probe: str | None = None

    @cached_property
    def stems(self) -> frozenset[str]:
        return stem_keywords(self.keywords)


@dataclass(frozen=True)
class TopicCatalog:
    topics: tuple[Topic, ...]

    def __post_init__(self):
        if len(self.topics) < 2:
            raise ConfigError("catalog needs 'other' plus at least one sensitive topic")
        labels = [t.label for t in self.topics]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate topic labels in catalog: {labels}")
        if labels[0] != OTHER:
            raise ConfigError("topic 0 must be labelled 'other'")
        for i, t in enumerate(self.topics):
            if t.id != i:
                raise ConfigError(f"topic {t.label!r} has id {t.id}, expected {i}")

    def __len__(self):
        return len(self.topics)

    def __getitem__(self, i) -> Topic:
        return self.topics[i]

    def __iter__(self):
        return iter(self.topics)

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.topics]

    @property
    def n(self) -> int:
        """Number of sensitive topics (N); the catalog holds N + 1 topics."""
        return len(self.topics) - 1

    def index(self, label: str) -> int:
        for t in self.topics:
            if t.label == label:
                return t.id
        raise ConfigError(f"unknown topic label {label!r}")

    def sensitive_stems(self) -> frozenset[str]:
        out = set()
        for t in self.topics[1:]:
            out |= t.stems
        return frozenset(out)

    @classmethod
    def from_labels(cls, labels, keywords=None):
        keywords = keywords or {}
        labels = list(labels)
        if OTHER in labels:
            labels.remove(OTHER)
        labels.insert(0, OTHER)
        return cls(tuple(Topic(i, lab, tuple(keywords.get(lab, ()))) for i, lab in enumerate(labels)))

    @classmethod
    def from_sections(cls, sections):
        """Build from parsed config sections; ``[other]`` becomes topic 0."""
        names = [n for n in sections if n.lower() == OTHER]
        names += [n for n in sections if n.lower() != OTHER]
        if not names or names[0].lower() != OTHER:
            raise ConfigError("catalog has no [other] section")
        topics = []
        for i, name in enumerate(names):
            sec = sections[name]
            topics.append(Topic(
                id=i,
                label=name.lower(),
                keywords=tuple(sec.words("keywords", [])),
                queries=tuple(q for q in sec.lines("queries", []) if q),
                probe=sec.get("probe"),
            ))
        return cls(tuple(topics))

    @classmethod
    def load(cls, path):
        return cls.from_sections(configfile.load(path))


@dataclass(frozen=True)
class TrainingCorpus:
    entries: tuple[tuple[int, str], ...]

    def __len__(self):
        return len(self.entries)

    def validate(self, catalog: TopicCatalog):
        seen = set()
        for tid, _ in self.entries:
            if not 0 <= tid < len(catalog):
                raise ConfigError(f"corpus entry has unknown topic id {tid}")
            seen.add(tid)
        missing = [catalog[i].label for i in range(len(catalog)) if i not in seen]
        if missing:
            raise ConfigError(f"topics without training entries: {missing}")

    @classmethod
    def load(cls, path, catalog: TopicCatalog):
        """Read ``<topic_label>\\t<advert text>`` lines."""
        entries = []
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read corpus {path}: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                if "\t" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected '<label>\\t<text>'")
                label, text = line.split("\t", 1)
                entries.append((catalog.index(label.strip().lower()), text.strip()))
        return cls(tuple(entries))

    def dump(self, path, catalog: TopicCatalog):
        with open(path, "w", encoding="utf-8") as fh:
            for tid, text in self.entries:
                fh.write(f"{catalog[tid].label}\t{text}\n")


class Dictionary:
    """Sorted, indexed set of stemmed keywords."""

    def __init__(self, words):
        self.words = tuple(sorted(set(words)))
        if not self.words:
            raise ConfigError("dictionary is empty")
        self.index = {w: i for i, w in enumerate(self.words)}

    def __contains__(self, word):
        return word in self.index

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def __eq__(self, other):
        if isinstance(other, Dictionary):
            return self.words == other.words
        if isinstance(other, (set, frozenset)):
            return set(self.words) == other
        return NotImplemented

    def __repr__(self):
        return f"Dictionary({len(self.words)} words)"

    def vectorize(self, tokens) -> np.ndarray:
        """Raw count vector of ``tokens`` over the dictionary (others ignored)."""
        vec = np.zeros(len(self.words))
        for t in tokens:
            j = self.index.get(t)
            if j is not None:
                vec[j] += 1
        return vec


def build_dictionary(corpus: TrainingCorpus) -> Dictionary:
    if not corpus.entries:
        raise ConfigError("training corpus is empty")
    words = set()
    for _, text in corpus.entries:
        words.update(tokenize(text))
    return Dictionary(words)


def _check_lambda(lam):
    if not (0.0 <= lam < 1.0) or math.isnan(lam):
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")


def smoothed_count(lam: float, raw):
    _check_lambda(lam)
    if np.any(np.asarray(raw) < 0):
        raise ValueError("raw counts must be non-negative")
    return lam + (1.0 - lam) * raw


def count_matrix(corpus: TrainingCorpus, n_topics: int, dictionary: Dictionary) -> np.ndarray:
    counts = np.zeros((n_topics, len(dictionary)))
    for tid, text in corpus.entries:
        counts[tid] += dictionary.vectorize(tokenize(text))
    return counts


@dataclass
class TopicModel:
    labels: tuple[str, ...]
    lam: float
    dictionary: Dictionary
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_lambda(self.lam)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.labels), len(self.dictionary)):
            raise ConfigError("count matrix shape does not match labels x dictionary")
        empty = [self.labels[i] for i, t in enumerate(self.counts.sum(axis=1)) if t == 0]
        if empty:
            raise ConfigError(f"topics with no dictionary keywords in training: {empty}")
        unseen = [w for w, c in zip(self.dictionary.words, self.counts.sum(axis=0)) if c == 0]
        if unseen:
            raise ConfigError(f"dictionary words never seen in training: {unseen[:5]}")

    @property
    def n_topics(self):
        return len(self.labels)

    @cached_property
    def smoothed(self) -> np.ndarray:
        return smoothed_count(self.lam, self.counts)

    @cached_property
    def topic_freq(self) -> np.ndarray:
        """phi_lambda(w | T(c_i)): each row normalised by its own topic total."""
        s = self.smoothed
        return s / s.sum(axis=1, keepdims=True)

    @cached_property
    def global_freq(self) -> np.ndarray:
        """phi_lambda(w | T(C)) from the per-topic smoothed counts summed over topics."""
        col = self.smoothed.sum(axis=0)
        return col / col.sum()

    @cached_property
    def joint_freq(self) -> np.ndarray:
        """f_lambda,i(w): per-topic smoothed counts over the corpus smoothed total."""
        s = self.smoothed
        return s / s.sum()

    @cached_property
    def priors(self) -> np.ndarray:
        return self.joint_freq.sum(axis=1)

    @cached_property
    def ratios(self) -> np.ndarray:
        """Weights phi_i(w) / phi_C(w); PRI+ is ``ratios @ psi``."""
        return self.topic_freq / self.global_freq

    @cached_property
    def raw_ratios(self) -> np.ndarray:
        """Unsmoothed weights used by the legacy PRI estimator."""
        tf = self.counts / self.counts.sum(axis=1, keepdims=True)
        gf = self.counts.sum(axis=0) / self.counts.sum()
        return tf / gf

    @property
    def topic_totals(self) -> dict[int, float]:
        return {i: float(t) for i, t in enumerate(self.counts.sum(axis=1))}

    def per_topic_freq(self, topic_id) -> dict[str, float]:
        return dict(zip(self.dictionary.words, self.topic_freq[topic_id]))

    def global_freq_map(self) -> dict[str, float]:
        return dict(zip(self.dictionary.words, self.global_freq))

    def joint_freq_map(self, topic_id) -> dict[str, float]:
        return dict(zip(self.dictionary.words, self.joint_freq[topic_id]))

    def prior_rmse(self) -> float:
        u = 1.0 / self.n_topics
        return float(np.sqrt(np.mean((self.priors - u) ** 2)))

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "lambda": self.lam,
            "words": list(self.dictionary.words),
            "counts": {lab: {w: int(c) for w, c in zip(self.dictionary.words, row) if c}
                       for lab, row in zip(self.labels, self.counts)},
        }

    @classmethod
    def from_dict(cls, data):
        try:
            dictionary = Dictionary(data["words"])
            labels = tuple(data["labels"])
            counts = np.zeros((len(labels), len(dictionary)))
            for i, lab in enumerate(labels):
                for w, c in data["counts"].get(lab, {}).items():
                    counts[i, dictionary.index[w]] = c
            return cls(labels, float(data["lambda"]), dictionary, counts)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed model data: {exc}") from exc


def fit_topic_model(corpus: TrainingCorpus, catalog: TopicCatalog, lam: float) -> TopicModel:
    _check_lambda(lam)
    corpus.validate(catalog)
    dictionary = build_dictionary(corpus)
    counts = count_matrix(corpus, len(catalog), dictionary)
    return TopicModel(tuple(catalog.labels), lam, dictionary, counts)


def prior_loss(counts: np.ndarray, lam: float) -> float:
    """Squared-error distance of the smoothed priors from uniform."""
    s = lam + (1.0 - lam) * counts
    p = s.sum(axis=1) / s.sum()
    return float(np.sum((1.0 / len(p) - p) ** 2))


def fit_lambda(corpus: TrainingCorpus, catalog: TopicCatalog, grid=LAMBDA_GRID) -> tuple[float, float]:
    """Grid-search lambda minimising the prior loss; returns ``(lambda, rmse)``.

    Ties go to the smaller lambda: the grid is scanned in increasing order and
    only a loss smaller by more than ``LOSS_TIE`` replaces the incumbent.
    """
    corpus.validate(catalog)
    dictionary = build_dictionary(corpus)
    counts = count_matrix(corpus, len(catalog), dictionary)
    best_lam, best_loss = None, math.inf
    for lam in grid:
        loss = prior_loss(counts, float(lam))
        if loss < best_loss - LOSS_TIE:
            best_lam, best_loss = float(lam), loss
    return best_lam, math.sqrt(best_loss / len(catalog))


def load_model(path) -> TopicModel:
    import json

    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc
    return TopicModel.from_dict(data.get("model", data))
