"""PRI / PRI+ scoring of response pages and topic detection.

Only advert text is scored; organic results are carried on the page for the
click models but never reach the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import TopicModel
from .errors import ConfigError
from .text import tokenize

SIGMA_FLOOR = 1e-6
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Item:
    title: str
    snippet: str
    url: str
    topic: int | None = None

    @property
    def text(self) -> str:
        return f"{self.title} {self.snippet}"


@dataclass(frozen=True)
class ResponsePage:
    query: str
    organic_items: tuple[Item, ...] = ()
    advert_items: tuple[Item, ...] = ()
    step_index: int = 1
    probe: bool = False

    def __post_init__(self):
        if self.step_index < 1:
            raise ValueError(f"step_index must be >= 1, got {self.step_index}")

    @property
    def items(self) -> tuple[Item, ...]:
        return self.organic_items + self.advert_items

    def advert_tokens(self) -> list[str]:
        tokens = []
        for ad in self.advert_items:
            tokens.extend(tokenize(ad.text))
        return tokens

    def to_dict(self) -> dict:
        def items(xs):
            return [{"title": i.title, "snippet": i.snippet, "url": i.url, "topic": i.topic} for i in xs]

        return {"query": self.query, "step_index": self.step_index, "probe": self.probe,
                "organic_items": items(self.organic_items), "advert_items": items(self.advert_items)}

    @classmethod
    def from_dict(cls, d):
        def items(xs):
            return tuple(Item(x.get("title", ""), x.get("snippet", ""), x.get("url", ""), x.get("topic"))
                         for x in xs or ())

        return cls(d.get("query", ""), items(d.get("organic_items")), items(d.get("advert_items")),
                   int(d.get("step_index", 1)), bool(d.get("probe", False)))


@dataclass(frozen=True)
class PriScoreVector:
    scores: np.ndarray
    step_index: int = 1

    def __len__(self):
        return len(self.scores)

    def __getitem__(self, i):
        return self.scores[i]

    def __iter__(self):
        return iter(self.scores)


def _page_counts(page: ResponsePage, model: TopicModel) -> np.ndarray:
    return model.dictionary.vectorize(page.advert_tokens())


def pri_score(page: ResponsePage, model: TopicModel, topic_id: int) -> float:
    """Legacy unsmoothed PRI score of one topic.

    A page without dictionary keywords scores exactly 1.
    """
    if not 0 <= topic_id < model.n_topics:
        raise ValueError(f"topic_id {topic_id} outside catalog of {model.n_topics} topics")
    counts = _page_counts(page, model)
    total = counts.sum()
    if total == 0:
        return 1.0
    return float(model.raw_ratios[topic_id] @ (counts / total))


def page_frequency(counts: np.ndarray, lam: float) -> np.ndarray:
    smoothed = lam + (1.0 - lam) * counts
    return smoothed / smoothed.sum()


def pri_plus_score(page: ResponsePage, model: TopicModel) -> PriScoreVector:
    counts = _page_counts(page, model)
    if counts.sum() == 0:
        return PriScoreVector(np.ones(model.n_topics), page.step_index)
    psi = page_frequency(counts, model.lam)
    return PriScoreVector(model.ratios @ psi, page.step_index)


@dataclass(frozen=True)
class TopicStats:
    mean: np.ndarray
    std: np.ndarray
    counts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 2 or self.mean.shape[0] != self.mean.shape[1]:
            raise ValueError("topic stats must be square (topics x components)")

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), tuple(d.get("counts", ())))


def stats_from_scores(labelled_scores, n_topics: int) -> TopicStats:
    """Per-topic component means and sample standard deviations (n - 1)."""
    buckets = [[] for _ in range(n_topics)]
    for tid, vec in labelled_scores:
        buckets[tid].append(np.asarray(getattr(vec, "scores", vec), float))
    short = [i for i, b in enumerate(buckets) if len(b) < 2]
    if short:
        raise ConfigError(f"topic stats need >= 2 training pages per topic; short topics: {short}")
    mean = np.empty((n_topics, n_topics))
    std = np.empty((n_topics, n_topics))
    for i, rows in enumerate(buckets):
        arr = np.vstack(rows)
        mean[i] = arr.mean(axis=0)
        std[i] = arr.std(axis=0, ddof=1)
    return TopicStats(mean, np.maximum(std, SIGMA_FLOOR), tuple(len(b) for b in buckets))


def fit_topic_stats(labelled_pages, model: TopicModel) -> TopicStats:
    scored = [(tid, pri_plus_score(page, model)) for tid, page in labelled_pages]
    return stats_from_scores(scored, model.n_topics)


@dataclass(frozen=True)
class NormalizedScore:
    z: np.ndarray


def normalize(p: PriScoreVector, stats: TopicStats) -> NormalizedScore:
    scores = np.asarray(getattr(p, "scores", p), float)
    z = (((scores[None, :] - stats.mean) / stats.std) ** 2).sum(axis=1)
    return NormalizedScore(z)


def detect(z: NormalizedScore) -> int:
    """Index of the smallest Z; any tie at the minimum resolves to topic 0."""
    values = np.asarray(getattr(z, "z", z), float)
    best = int(np.argmin(values))
    if np.sum(np.abs(values - values[best]) <= TIE_TOL) > 1:
        return 0
    return best


def detect_session(per_probe_detections, target: int) -> bool:
    if not per_probe_detections:
        raise ValueError("session has no probe detections")
    return target in per_probe_detections
