"""Simulated search engine that learns a per-session topic belief.

The engine keeps a belief vector over the catalog topics. Queries that hit
topic keywords pull the belief toward those topics, clicks add mass to the
clicked item's topic, and every response page carries adverts sampled from
the current belief. Probe pages are therefore a noisy view of what the engine
has learnt so far.

Topic 0 ("other") is matched by the catalog's own other-keywords plus the
proxy-topic vocabulary, and is advertised with commercial adverts that share
no words with the trained dictionary.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import TopicCatalog
from .errors import ConfigError, ContractViolation
from .estimator import Item, ResponsePage
from .scripting import PROBE, SessionPlan, decide_clicks, rng_from
from .text import tokenize

AD_VOLUME_POLICIES = ("belief", "independent")
NORM_TOL = 1e-9


@dataclass(frozen=True)
class EngineConfig:
    learning_rate: float = 0.5
    click_weight: float = 0.005
    ads_per_page: tuple[int, int] = (0, 8)
    decay: float = 0.0
    seed: int = 0
    organic_per_page: int = 3
    ad_volume: str = "belief"

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.click_weight < 0:
            raise ConfigError(f"click_weight must be >= 0, got {self.click_weight}")
        if not 0 <= self.decay <= 1:
            raise ConfigError(f"decay must lie in [0, 1], got {self.decay}")
        lo, hi = self.ads_per_page
        if not 0 <= lo <= hi:
            raise ConfigError(f"ads_per_page needs 0 <= min <= max, got {self.ads_per_page}")
        if self.organic_per_page < 0:
            raise ConfigError("organic_per_page must be >= 0")
        if self.ad_volume not in AD_VOLUME_POLICIES:
            raise ConfigError(f"ad_volume must be one of {AD_VOLUME_POLICIES}, got {self.ad_volume!r}")

    @classmethod
    def from_section(cls, sec, **overrides):
        """Read an ``[engine]`` config section; absent keys keep their defaults."""
        if sec is None:
            return cls(**overrides)
        d = cls()
        ads = d.ads_per_page
        raw = sec.get("ads_per_page")
        if raw is not None:
            try:
                ads = tuple(int(x) for x in raw.replace(",", " ").split())
            except ValueError:
                ads = ()
            if len(ads) == 1:
                ads = (ads[0], ads[0])
            if len(ads) != 2:
                raise ConfigError(f"[engine] ads_per_page: expected 'min max', got {raw!r}")
        kw = dict(
            learning_rate=sec.get_float("learning_rate", d.learning_rate),
            click_weight=sec.get_float("click_weight", d.click_weight),
            ads_per_page=ads,
            decay=sec.get_float("decay", d.decay),
            seed=sec.get_int("seed", d.seed),
            organic_per_page=sec.get_int("organic_per_page", d.organic_per_page),
            ad_volume=sec.get("ad_volume", d.ad_volume),
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass
class EngineState:
    belief: np.ndarray
    history: int = 0
    served: tuple = ()

    @classmethod
    def fresh(cls, n_topics: int) -> "EngineState":
        return cls(np.full(n_topics, 1.0 / n_topics))

    def check(self):
        b = self.belief
        if np.any(b < 0) or abs(b.sum() - 1.0) > NORM_TOL:
            raise ContractViolation(f"belief is not a probability vector: {b}")


class TopicMatcher:
    """Maps query tokens to a distribution over topics.

    A token shared by k topics gives 1/k to each of them.
    """

    def __init__(self, stems: Sequence[frozenset[str]]):
        self.stems = [frozenset(s) for s in stems]
        self._owners: dict[str, list[int]] = {}
        for i, s in enumerate(self.stems):
            for w in s:
                self._owners.setdefault(w, []).append(i)

    @property
    def n_topics(self):
        return len(self.stems)

    def match(self, text: str) -> np.ndarray | None:
        m = np.zeros(self.n_topics)
        for t in tokenize(text):
            owners = self._owners.get(t)
            if owners:
                m[owners] += 1.0 / len(owners)
        total = m.sum()
        return m / total if total else None

    def best(self, text: str) -> int | None:
        m = self.match(text)
        return None if m is None else int(np.argmax(m))

    @classmethod
    def for_catalog(cls, catalog: TopicCatalog, proxies=()) -> "TopicMatcher":
        sensitive = catalog.sensitive_stems()
        other = set(catalog[0].stems)
        for p in proxies:
            other |= p.stems
            for q in p.queries:
                other.update(tokenize(q))
        stems = [frozenset(other - sensitive)] + [t.stems for t in catalog.topics[1:]]
        return cls(stems)


@dataclass(frozen=True)
class AdInventory:
    templates: tuple[tuple[tuple[str, str], ...], ...]
    labels: tuple[str, ...] = ()

    MIN_TEMPLATES = 5
    MIN_KEYWORDS = 2

    @property
    def n_topics(self):
        return len(self.templates)

    def validate(self, matcher: TopicMatcher):
        if matcher.n_topics != self.n_topics:
            raise ConfigError("inventory and matcher disagree on the number of topics")
        for i, temps in enumerate(self.templates):
            name = self.labels[i] if self.labels else str(i)
            if len(temps) < self.MIN_TEMPLATES:
                raise ConfigError(f"topic {name!r} has {len(temps)} advert templates, needs {self.MIN_TEMPLATES}")
            for title, snippet in temps:
                hits = sum(1 for t in tokenize(f"{title} {snippet}") if t in matcher.stems[i])
                if hits < self.MIN_KEYWORDS:
                    raise ConfigError(f"advert for {name!r} has {hits} topic keywords: {title!r}")

    def vocabulary(self, topic_id: int) -> set[str]:
        out = set()
        for title, snippet in self.templates[topic_id]:
            out.update(tokenize(f"{title} {snippet}"))
        return out

    def item(self, topic_id: int, j: int) -> Item:
        title, snippet = self.templates[topic_id][j]
        label = self.labels[topic_id] if self.labels else str(topic_id)
        return Item(title, snippet, f"https://ads.example/{label}/{j}", topic_id)

    @classmethod
    def load(cls, path, catalog: TopicCatalog) -> "AdInventory":
        """Read ``<label>\\t<title> | <snippet>`` lines (the snippet is optional)."""
        buckets: list[list[tuple[str, str]]] = [[] for _ in range(len(catalog))]
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read advert inventory {path}: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                if "\t" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected '<label>\\t<advert>'")
                label, text = line.split("\t", 1)
                title, _, snippet = text.partition("|")
                buckets[catalog.index(label.strip().lower())].append((title.strip(), snippet.strip()))
        return cls(tuple(tuple(b) for b in buckets), tuple(catalog.labels))


def update_belief(state: EngineState, match: np.ndarray | None, config: EngineConfig) -> EngineState:
    """Bayesian-style query update followed by decay toward uniform.

    Each topic's belief is multiplied by ``lr * match + (1 - lr) / n``, so a
    query pulls belief toward the topics it hits in proportion to what the
    engine already believes.
    """
    b = state.belief
    n = len(b)
    if match is not None:
        factor = config.learning_rate * match + (1.0 - config.learning_rate) / n
        post = b * factor
        total = post.sum()
        b = post / total if total > 0 else factor / factor.sum()
    if config.decay:
        b = (1.0 - config.decay) * b + config.decay / n
    state.belief = b / b.sum()
    return state


def ad_count(belief: np.ndarray, config: EngineConfig, rng: np.random.Generator) -> int:
    lo, hi = config.ads_per_page
    if hi == lo:
        return lo
    if config.ad_volume == "independent":
        return int(rng.integers(lo, hi + 1))
    n = len(belief)
    confidence = float(np.clip((belief.max() - 1.0 / n) / (1.0 - 1.0 / n), 0.0, 1.0))
    return lo + int(rng.binomial(hi - lo, confidence))


def organic_items(query: str, matcher: TopicMatcher, count: int) -> tuple[Item, ...]:
    topic = matcher.best(query)
    slug = "+".join(query.split())
    return tuple(Item(f"{query} - result {r + 1}", f"Pages about {query}",
                      f"https://www.example.org/search?q={slug}&r={r + 1}", topic)
                 for r in range(count))


def respond(state: EngineState, query: str, inventory: AdInventory, config: EngineConfig,
            matcher: TopicMatcher, rng, *, learn=True, step_index=1, probe=False) -> ResponsePage:
    """Update ``state`` from ``query`` and return the response page.

    With ``learn=False`` the query itself is not folded into the belief (decay
    still applies).
    """
    rng = rng_from(rng)
    update_belief(state, matcher.match(query) if learn else None, config)
    state.history += 1
    b = state.belief
    ads = []
    for _ in range(ad_count(b, config, rng)):
        topic = int(rng.choice(len(b), p=b))
        ads.append(inventory.item(topic, int(rng.integers(len(inventory.templates[topic])))))
    page = ResponsePage(query, organic_items(query, matcher, config.organic_per_page), tuple(ads),
                        step_index, probe)
    state.served = page.items
    return page


def observe_click(state: EngineState, item: Item, config: EngineConfig) -> EngineState:
    if item not in state.served:
        raise ContractViolation(f"clicked item was not served on the latest page: {item.url}")
    if config.click_weight and item.topic is not None:
        b = state.belief.copy()
        b[item.topic] += config.click_weight
        state.belief = b / b.sum()
    return state


@dataclass
class World:
    """Everything the engine needs that does not change between sessions."""

    catalog: TopicCatalog
    matcher: TopicMatcher
    inventory: AdInventory

    @classmethod
    def build(cls, catalog: TopicCatalog, inventory: AdInventory, proxies=()) -> "World":
        matcher = TopicMatcher.for_catalog(catalog, proxies)
        inventory.validate(matcher)
        return cls(catalog, matcher, inventory)


@dataclass
class SimulatedEngine:
    world: World
    config: EngineConfig = field(default_factory=EngineConfig)
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.config.seed)
        self.state = EngineState.fresh(len(self.world.catalog))

    def respond(self, query, learn=True, step_index=1, probe=False) -> ResponsePage:
        return respond(self.state, query, self.world.inventory, self.config, self.world.matcher,
                       self.rng, learn=learn, step_index=step_index, probe=probe)

    def observe_click(self, item: Item):
        observe_click(self.state, item, self.config)

    @property
    def belief(self) -> np.ndarray:
        return self.state.belief


def run_session(plan: SessionPlan, config: EngineConfig, world: World, rng=None,
                honor_waits=False) -> list[tuple[int, ResponsePage]]:
    """Execute ``plan`` on a fresh engine and return ``(probe_number, page)`` pairs.

    Probe queries are sampling points: they do not teach the engine and their
    pages are never clicked. Step waits are ignored unless ``honor_waits``.
    """
    rng = rng_from(config.seed if rng is None else rng)
    engine = SimulatedEngine(world, config, rng)
    keywords = world.catalog[plan.topic_id].keywords
    out = []
    for pos, step in enumerate(plan.steps, start=1):
        is_probe = step.kind == PROBE
        page = engine.respond(step.query, learn=not is_probe, step_index=pos, probe=is_probe)
        if is_probe:
            out.append((len(out) + 1, page))
        else:
            for item in decide_clicks(page, plan.click_model, keywords, rng):
                engine.observe_click(item)
        if honor_waits and step.wait:
            time.sleep(step.wait)
    return out
