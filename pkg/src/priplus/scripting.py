"""Query scripts, session plans and the noise / proxy / click defences."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import configfile
from .errors import ConfigError, ContractViolation, ScriptParseError
from .text import stem_keywords, tokenize

PROBE, SENSITIVE, NOISE, PROXY = "probe", "sensitive", "noise", "proxy"
STEP_KINDS = (PROBE, SENSITIVE, NOISE, PROXY)
DEFAULT_PROBES = 5

_WAIT = re.compile(r"^wait(?:\s+(\S+))?\s*$", re.IGNORECASE)
_DIRECTIVE = re.compile(r"^(\w+)\s*:\s*(.*)$")


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# -- scripts -----------------------------------------------------------------


@dataclass(frozen=True)
class QueryScript:
    probe: str
    steps: tuple[tuple[str, int], ...]
    keywords: tuple[str, ...] = ()

    @property
    def queries(self) -> list[str]:
        return [q for q, _ in self.steps]

    def probe_count(self) -> int:
        return sum(1 for q, _ in self.steps if q == self.probe)


def parse_script(text: str) -> QueryScript:
    keywords: tuple[str, ...] = ()
    probe = None
    steps: list[list] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if not line.startswith("!"):
            steps.append([line, 0])
            continue
        body = line[1:].strip()
        m = _WAIT.match(body)
        if m:
            arg = m.group(1)
            try:
                seconds = int(arg)
            except (TypeError, ValueError):
                raise ScriptParseError(f"'! wait' needs an integer number of seconds, got {arg!r}", lineno) from None
            if seconds < 0:
                raise ScriptParseError("'! wait' must not be negative", lineno)
            if not steps:
                raise ScriptParseError("'! wait' before any query", lineno)
            steps[-1][1] = seconds
            continue
        m = _DIRECTIVE.match(body)
        if not m:
            raise ScriptParseError(f"unknown directive {line!r}", lineno)
        name, value = m.group(1).lower(), m.group(2).strip()
        if name == "keywords":
            keywords = tuple(value.split())
        elif name == "probe":
            if not value:
                raise ScriptParseError("empty probe directive", lineno)
            probe = value
        else:
            raise ScriptParseError(f"unknown directive '! {name}:'", lineno)
    if probe is None:
        raise ScriptParseError("script has no '! probe:' directive")
    return QueryScript(probe, tuple((q, w) for q, w in steps), keywords)


def render_script(script: QueryScript) -> str:
    lines = []
    if script.keywords:
        lines.append("! keywords: " + " ".join(script.keywords))
    lines.append(f"! probe: {script.probe}")
    for query, wait in script.steps:
        lines.append(query)
        if wait:
            lines.append(f"! wait {wait}")
    return "\n".join(lines) + "\n"


def load_script(path) -> QueryScript:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_script(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from exc


def generate_script(queries: Sequence[str], probe: str, seed=None, keywords=(),
                    num_probes=DEFAULT_PROBES, gap=(3, 5), wait=(1, 20)) -> QueryScript:
    """Probe-delimited script drawing ``gap`` topic queries between probes.

    Queries are used without replacement until the list is exhausted, then
    reshuffled.
    """
    if not queries:
        raise ConfigError("cannot generate a script without topic queries")
    if num_probes < 1:
        raise ConfigError("a script needs at least one probe")
    rng = rng_from(seed)
    bag: list[str] = []

    def draw():
        if not bag:
            bag.extend(queries[i] for i in rng.permutation(len(queries)))
        return bag.pop()

    def pause():
        return int(rng.integers(wait[0], wait[1] + 1))

    steps = []
    for p in range(num_probes):
        steps.append((probe, pause()))
        if p < num_probes - 1:
            for _ in range(int(rng.integers(gap[0], gap[1] + 1))):
                steps.append((draw(), pause()))
    return QueryScript(probe, tuple(steps), tuple(keywords))


def candidate_queries(keywords: Sequence[str], seed=None, n=20, max_words=3) -> list[str]:
    """Random keyword groups for a human to pad into natural queries.

    Groups of 1..max_words keywords are drawn uniformly with replacement.
    """
    if not keywords:
        return []
    rng = rng_from(seed)
    out = []
    for _ in range(n):
        k = int(rng.integers(1, max_words + 1))
        out.append(" ".join(keywords[i] for i in rng.integers(0, len(keywords), size=k)))
    return out


# -- defence models ----------------------------------------------------------


class NoiseModel(enum.Enum):
    NONE = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def ratio(self) -> int:
        return self.value

    @classmethod
    def parse(cls, name):
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ConfigError(f"unknown noise model {name!r}") from None


class ClickVariant(enum.Enum):
    NO_CLICK = "no_click"
    CLICK_RELEVANT = "click_relevant"
    CLICK_NON_RELEVANT = "click_non_relevant"
    CLICK_ALL = "click_all"
    CLICK_TWO_RANDOM = "click_two_random"


@dataclass(frozen=True)
class ClickModel:
    variant: ClickVariant = ClickVariant.NO_CLICK
    tf_threshold: float = 0.1

    def __post_init__(self):
        if not 0 < self.tf_threshold < 1:
            raise ConfigError(f"tf_threshold must lie in (0, 1), got {self.tf_threshold}")

    @classmethod
    def parse(cls, name, tf_threshold=0.1):
        try:
            return cls(ClickVariant(str(name).lower()), tf_threshold)
        except ValueError:
            raise ConfigError(f"unknown click model {name!r}") from None


NO_CLICK = ClickModel()


@dataclass(frozen=True)
class Step:
    kind: str
    query: str
    wait: int = 0

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")


@dataclass(frozen=True)
class SessionPlan:
    steps: tuple[Step, ...]
    topic_id: int
    probe: str
    click_model: ClickModel = NO_CLICK
    noise_model: NoiseModel = NoiseModel.NONE
    proxy: str | None = None

    @property
    def num_probes(self) -> int:
        return sum(1 for s in self.steps if s.kind == PROBE)

    def kinds(self) -> list[str]:
        return [s.kind for s in self.steps]

    def with_clicks(self, click_model: ClickModel) -> "SessionPlan":
        return replace(self, click_model=click_model)


def plan_from_script(script: QueryScript, topic_id: int, click_model=NO_CLICK) -> SessionPlan:
    steps = tuple(Step(PROBE if q == script.probe else SENSITIVE, q, w) for q, w in script.steps)
    return SessionPlan(steps, topic_id, script.probe, click_model)


def inject_noise(plan: SessionPlan, model: NoiseModel, pool: Sequence[str], seed=None) -> SessionPlan:
    """Insert ``model.ratio`` noise queries after every sensitive step and top up
    the noise run immediately before every probe to the same count.

    A probe that opens the session has nothing before it to mask and gets no
    noise.
    """
    ratio = model.ratio
    if ratio == 0:
        return replace(plan, noise_model=model)
    if not pool:
        raise ConfigError("noise pool is empty")
    rng = rng_from(seed)

    def noise():
        return Step(NOISE, pool[int(rng.integers(len(pool)))])

    out: list[Step] = []
    for step in plan.steps:
        if step.kind == PROBE and out:
            trailing = 0
            for prev in reversed(out):
                if prev.kind != NOISE:
                    break
                trailing += 1
            out.extend(noise() for _ in range(max(0, ratio - trailing)))
            out.append(step)
        else:
            out.append(step)
            if step.kind == SENSITIVE:
                out.extend(noise() for _ in range(ratio))
    return replace(plan, steps=tuple(out), noise_model=model)


def filter_queries(queries: Sequence[str], banned_stems) -> list[str]:
    """Drop queries sharing any stem with ``banned_stems``."""
    banned = frozenset(banned_stems)
    return [q for q in queries if not banned.intersection(tokenize(q))]


def load_noise_pool(path, sensitive_stems=frozenset()) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read noise pool {path}: {exc}") from exc
    queries = [ln for ln in lines if ln and not ln.startswith("#")]
    return filter_queries(queries, sensitive_stems)


# -- proxy topics ------------------------------------------------------------


@dataclass(frozen=True)
class ProxyTopic:
    label: str
    keywords: tuple[str, ...]
    queries: tuple[str, ...]

    @property
    def stems(self) -> frozenset[str]:
        return stem_keywords(self.keywords)


def proxy_topics_from_sections(sections, sensitive_stems=frozenset()) -> list[ProxyTopic]:
    """One proxy topic per section; queries revealing a sensitive stem are dropped."""
    out = []
    for name, sec in sections.items():
        queries = [q for q in sec.lines("queries", []) if q]
        out.append(ProxyTopic(name, tuple(sec.words("keywords", [])),
                              tuple(filter_queries(queries, sensitive_stems))))
    return out


def load_proxy_topics(path, sensitive_stems=frozenset()) -> list[ProxyTopic]:
    return proxy_topics_from_sections(configfile.load(path), sensitive_stems)


def build_proxy_session(sensitive_queries: Sequence[str], proxy: ProxyTopic, probe: str, seed=None,
                        topic_id: int = 0, num_probes=DEFAULT_PROBES, click_model=NO_CLICK) -> SessionPlan:
    """Blocks of 3-4 proxy queries plus one sensitive query, shuffled, with a
    probe before and after every block."""
    if len(proxy.queries) < 4:
        raise ConfigError(f"proxy topic {proxy.label!r} needs >= 4 queries, has {len(proxy.queries)}")
    if len(sensitive_queries) < 4:
        raise ConfigError(f"proxy sessions need >= 4 sensitive queries, got {len(sensitive_queries)}")
    rng = rng_from(seed)
    sensitive_order = [sensitive_queries[i] for i in rng.permutation(len(sensitive_queries))]
    steps = [Step(PROBE, probe)]
    for b in range(num_probes - 1):
        m = int(rng.integers(3, 5))
        picks = rng.choice(len(proxy.queries), size=m, replace=False)
        block = [Step(PROXY, proxy.queries[i]) for i in picks]
        block.append(Step(SENSITIVE, sensitive_order[b % len(sensitive_order)]))
        steps.extend(block[i] for i in rng.permutation(len(block)))
        steps.append(Step(PROBE, probe))
    return SessionPlan(tuple(steps), topic_id, probe, click_model, NoiseModel.NONE, proxy.label)


def proxy_blocks(plan: SessionPlan) -> list[list[Step]]:
    """The non-probe runs between consecutive probes."""
    blocks, cur = [], None
    for s in plan.steps:
        if s.kind == PROBE:
            if cur:
                blocks.append(cur)
            cur = []
        elif cur is not None:
            cur.append(s)
    return blocks


# -- clicks ------------------------------------------------------------------


def term_frequency(item_text: str, topic_keywords) -> float:
    tokens = tokenize(item_text)
    if not tokens:
        return 0.0
    stems = topic_keywords if isinstance(topic_keywords, frozenset) else stem_keywords(topic_keywords)
    return sum(1 for t in tokens if t in stems) / len(tokens)


def decide_clicks(page, model: ClickModel, topic_keywords, seed=None) -> list:
    if page.probe:
        raise ContractViolation("probe response pages are never clicked")
    items = list(page.items)
    v = model.variant
    if v is ClickVariant.NO_CLICK or not items:
        return []
    if v is ClickVariant.CLICK_ALL:
        return items
    if v is ClickVariant.CLICK_TWO_RANDOM:
        rng = rng_from(seed)
        return [items[int(i)] for i in rng.integers(0, len(items), size=2)]
    stems = stem_keywords(topic_keywords)
    relevant = [term_frequency(it.text, stems) > model.tf_threshold for it in items]
    want = v is ClickVariant.CLICK_RELEVANT
    return [it for it, r in zip(items, relevant) if r == want]
