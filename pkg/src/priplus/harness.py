"""Campaign runner: train, simulate every experiment cell, score probes, report.

A campaign trains the topic model on the advert corpus, fits per-topic score
statistics on held-back baseline sessions, then runs ``sessions_per_cell``
sessions for every (cell, topic) pair. Rates are computed per fold and
summarised as mean and standard error over folds.
"""

from __future__ import annotations

import csv
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import configfile
from .corpus import TopicCatalog, TopicModel, TrainingCorpus, fit_lambda, fit_topic_model
from .deniability import delta_star
from .errors import ConfigError
from .estimator import TopicStats, detect, fit_topic_stats, normalize, pri_plus_score
from .scripting import (ClickModel, ClickVariant, NoiseModel, build_proxy_session, generate_script,
                        inject_noise, load_noise_pool, plan_from_script, proxy_topics_from_sections)
from .simengine import AdInventory, EngineConfig, World, run_session

DEFAULT_PROBE = "help and advice"
CSV_HEADER = ("condition", "topic", "metric", "mean", "sem")
SCORE_HEADER = ("condition", "session_id", "probe_step", "topic_label", "detected", "pri_plus", "z")
AVERAGE = "average"


# -- experiment grid ---------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    id: str
    noise: NoiseModel = NoiseModel.NONE
    click: ClickModel = ClickModel()
    proxy: bool = False

    @classmethod
    def parse(cls, name: str) -> "Cell":
        """``baseline``, ``noise_<level>``, ``<click model>`` or ``proxy_<click model>``."""
        name = name.strip().lower()
        if name == "baseline":
            return cls(name)
        if name.startswith("noise_"):
            return cls(name, noise=NoiseModel.parse(name[len("noise_"):]))
        if name.startswith("proxy_"):
            return cls(name, click=ClickModel.parse(name[len("proxy_"):]), proxy=True)
        return cls(name, click=ClickModel.parse(name))


def default_grid() -> tuple[Cell, ...]:
    names = ["baseline", "noise_low", "noise_medium", "noise_high"]
    names += [v.value for v in ClickVariant if v is not ClickVariant.NO_CLICK]
    names += [f"proxy_{v.value}" for v in ClickVariant]
    return tuple(Cell.parse(n) for n in names)


# -- configuration -----------------------------------------------------------


def _data(name) -> Path:
    return Path(str(resources.files("priplus") / "data" / name))


@dataclass
class CampaignConfig:
    catalog: Path = field(default_factory=lambda: _data("catalog.ini"))
    corpus: Path = field(default_factory=lambda: _data("corpus.tsv"))
    inventory: Path = field(default_factory=lambda: _data("adverts.tsv"))
    proxy_topics: Path | None = field(default_factory=lambda: _data("proxy_topics.ini"))
    noise_pool: Path = field(default_factory=lambda: _data("noise_pool.txt"))
    sessions_per_cell: int = 28
    folds: int = 7
    probes_per_session: int = 5
    training_sessions: int = 14
    engine: EngineConfig = field(default_factory=EngineConfig)
    out_dir: Path | None = None
    seed: int = 0
    lam: float | None = None
    cells: tuple[Cell, ...] = field(default_factory=default_grid)
    workers: int = 1
    honor_waits: bool = False
    extra_proxy_sections: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.sessions_per_cell < self.folds:
            raise ConfigError(f"sessions_per_cell ({self.sessions_per_cell}) must be >= folds ({self.folds})")
        if self.probes_per_session < 1:
            raise ConfigError("probes_per_session must be >= 1")
        if self.training_sessions < 2:
            raise ConfigError("training_sessions must be >= 2")
        ids = [c.id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate cells: {ids}")

    @classmethod
    def from_file(cls, path, **overrides) -> "CampaignConfig":
        """Read ``[campaign]`` and ``[engine]``; any other section is a proxy topic.

        Relative paths resolve against the config file's directory.
        """
        path = Path(path)
        sections = configfile.load(path)
        if "campaign" not in sections:
            raise ConfigError(f"{path}: missing [campaign] section")
        camp = sections["campaign"]
        base = path.parent

        def p(key, default):
            raw = camp.get(key)
            if raw is None:
                return default
            q = Path(raw)
            return q if q.is_absolute() else base / q

        d = cls.__dataclass_fields__
        lam = camp.get("lambda")
        fit = (camp.get("fit_lambda", "true") or "true").lower() in ("1", "true", "yes", "on")
        cells = camp.get("cells")
        kw = dict(
            catalog=p("catalog", _data("catalog.ini")),
            corpus=p("corpus", _data("corpus.tsv")),
            inventory=p("inventory", _data("adverts.tsv")),
            proxy_topics=p("proxy_topics", _data("proxy_topics.ini")),
            noise_pool=p("noise_pool", _data("noise_pool.txt")),
            sessions_per_cell=camp.get_int("sessions_per_cell", d["sessions_per_cell"].default),
            folds=camp.get_int("folds", d["folds"].default),
            probes_per_session=camp.get_int("probes_per_session", d["probes_per_session"].default),
            training_sessions=camp.get_int("training_sessions", d["training_sessions"].default),
            engine=EngineConfig.from_section(sections.get("engine")),
            out_dir=p("out_dir", None),
            seed=camp.get_int("seed", 0),
            lam=None if fit and lam is None else camp.get_float("lambda", 0.0),
            cells=tuple(Cell.parse(c) for c in cells.split()) if cells else default_grid(),
            workers=camp.get_int("workers", 1),
            extra_proxy_sections={k: v for k, v in sections.items() if k not in ("campaign", "engine")},
        )
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


# -- results -----------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    condition: str
    topic: str
    metric: str
    mean: float
    sem: float


@dataclass(frozen=True)
class ProbeRecord:
    condition: str
    session_id: str
    topic_id: int
    probe_step: int
    detected: int
    pri_plus: tuple[float, ...]
    z: tuple[float, ...]


@dataclass
class DetectionReport:
    rows: list[Row] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    probes: list[ProbeRecord] = field(default_factory=list)

    def get(self, condition, topic, metric) -> Row:
        for r in self.rows:
            if (r.condition, r.topic, r.metric) == (condition, topic, metric):
                return r
        raise KeyError((condition, topic, metric))

    def value(self, condition, topic, metric) -> float:
        return self.get(condition, topic, metric).mean

    @property
    def conditions(self) -> list[str]:
        return list(dict.fromkeys(r.condition for r in self.rows))

    def topics(self, condition) -> list[str]:
        return list(dict.fromkeys(r.topic for r in self.rows if r.condition == condition))

    def to_dict(self):
        return {"meta": self.meta,
                "rows": [{"condition": r.condition, "topic": r.topic, "metric": r.metric,
                          "mean": r.mean, "sem": r.sem} for r in self.rows]}


def fold_stats(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (sample std / sqrt(n)) over folds."""
    v = np.asarray(values, float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


def assign_folds(n_sessions: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per session: a random permutation split into near-equal parts."""
    out = np.empty(n_sessions, dtype=int)
    for f, idx in enumerate(np.array_split(rng.permutation(n_sessions), folds)):
        out[idx] = f
    return out


def session_seed(seed: int, *parts) -> np.random.SeedSequence:
    keys = [int(seed) & 0xFFFFFFFF]
    for p in parts:
        keys.append(zlib.crc32(p.encode()) if isinstance(p, str) else int(p))
    return np.random.SeedSequence(keys)


# -- campaign ----------------------------------------------------------------


@dataclass
class Setup:
    """Everything derived from the input files, shared by all cells."""

    catalog: TopicCatalog
    model: TopicModel
    world: World
    proxies: list
    noise_pool: list[str]
    stats: TopicStats | None = None
    lam_rmse: float | None = None


def prepare(config: CampaignConfig) -> Setup:
    catalog = TopicCatalog.load(config.catalog)
    corpus = TrainingCorpus.load(config.corpus, catalog)
    sensitive = catalog.sensitive_stems()
    proxy_sections = {}
    if config.proxy_topics is not None:
        proxy_sections.update(configfile.load(config.proxy_topics))
    proxy_sections.update(config.extra_proxy_sections)
    proxies = proxy_topics_from_sections(proxy_sections, sensitive)
    pool = load_noise_pool(config.noise_pool, sensitive)
    lam, rmse = config.lam, None
    if lam is None:
        lam, rmse = fit_lambda(corpus, catalog)
    model = fit_topic_model(corpus, catalog, lam)
    inventory = AdInventory.load(config.inventory, catalog)
    world = World.build(catalog, inventory, proxies)
    setup = Setup(catalog, model, world, proxies, pool, None, rmse)
    setup.stats = train_stats(setup, config)
    return setup


def probe_for(catalog, topic_id):
    return catalog[topic_id].probe or DEFAULT_PROBE


def build_plan(setup: Setup, config: CampaignConfig, cell: Cell, topic_id: int, rng):
    topic = setup.catalog[topic_id]
    probe = probe_for(setup.catalog, topic_id)
    k = config.probes_per_session
    if cell.proxy:
        if not setup.proxies:
            raise ConfigError("proxy cells need at least one proxy topic")
        proxy = setup.proxies[int(rng.integers(len(setup.proxies)))]
        return build_proxy_session(topic.queries, proxy, probe, rng, topic_id, k, cell.click)
    script = generate_script(topic.queries, probe, rng, topic.keywords, num_probes=k)
    plan = plan_from_script(script, topic_id, cell.click)
    return inject_noise(plan, cell.noise, setup.noise_pool, rng)


def run_one(setup: Setup, config: CampaignConfig, cell: Cell, topic_id: int, index: int):
    rng = np.random.default_rng(session_seed(config.seed, cell.id, topic_id, index))
    plan = build_plan(setup, config, cell, topic_id, rng)
    return run_session(plan, config.engine, setup.world, rng, config.honor_waits)


def train_stats(setup: Setup, config: CampaignConfig) -> TopicStats:
    """Score statistics from probe pages of held-back baseline sessions."""
    train_cell = Cell("training")
    labelled = []
    for tid in range(len(setup.catalog)):
        for i in range(config.training_sessions):
            for _, page in run_one(setup, config, train_cell, tid, i):
                labelled.append((tid, page))
    return fit_topic_stats(labelled, setup.model)


def run_cell(setup: Setup, config: CampaignConfig, cell: Cell) -> list[ProbeRecord]:
    out = []
    try:
        for tid in range(len(setup.catalog)):
            label = setup.catalog[tid].label
            for i in range(config.sessions_per_cell):
                for k, page in run_one(setup, config, cell, tid, i):
                    p = pri_plus_score(page, setup.model)
                    z = normalize(p, setup.stats)
                    out.append(ProbeRecord(cell.id, f"{cell.id}/{label}/{i}", tid, k, detect(z),
                                           tuple(float(x) for x in p.scores), tuple(float(x) for x in z.z)))
    except Exception as exc:
        raise type(exc)(f"cell {cell.id!r}: {exc}") from exc
    return out


def _cell_job(args):
    setup, config, cell = args
    return run_cell(setup, config, cell)


def summarise(records: list[ProbeRecord], setup: Setup, config: CampaignConfig, cell: Cell) -> list[Row]:
    """Fold-level rates for one cell.

    Per topic: ``true_detect`` over all probes and per probe step, the
    session-level rate, ``false_detect`` (share of "other" probes detected as
    the topic) and ``delta_star``. For "other", ``false_detect`` counts
    detections of any sensitive topic.
    """
    n_topics = len(setup.catalog)
    k = config.probes_per_session
    sessions: dict[tuple[int, str], list[ProbeRecord]] = {}
    for r in records:
        sessions.setdefault((r.topic_id, r.session_id), []).append(r)

    # fold of each session, by (topic, index) in creation order
    fold_of = {}
    for tid in range(n_topics):
        ids = list(dict.fromkeys(r.session_id for r in records if r.topic_id == tid))
        frng = np.random.default_rng(session_seed(config.seed, cell.id, tid, "folds"))
        for sid, f in zip(ids, assign_folds(len(ids), config.folds, frng)):
            fold_of[sid] = int(f)

    def per_fold(tid, fn):
        vals = []
        for f in range(config.folds):
            group = [recs for (t, sid), recs in sessions.items() if t == tid and fold_of[sid] == f]
            vals.append(fn(group))
        return fold_stats(vals)

    def rate(group, target, step=None, any_sensitive=False):
        probes = [r for recs in group for r in recs if step is None or r.probe_step == step]
        if not probes:
            return 0.0
        if any_sensitive:
            return sum(r.detected != 0 for r in probes) / len(probes)
        return sum(r.detected == target for r in probes) / len(probes)

    def session_rate(group, target):
        if not group:
            return 0.0
        return sum(any(r.detected == target for r in recs) for recs in group) / len(group)

    def dstar(group):
        if not group:
            return 0.0
        return float(np.mean([delta_star([r.pri_plus for r in recs]) for recs in group]))

    rows = []
    for tid in range(n_topics):
        label = setup.catalog[tid].label
        metrics = []
        if tid == 0:
            metrics.append(("false_detect", per_fold(0, lambda g: rate(g, 0, any_sensitive=True))))
        else:
            metrics.append(("true_detect", per_fold(tid, lambda g: rate(g, tid))))
            metrics.append(("false_detect", per_fold(0, lambda g: rate(g, tid))))
            metrics.append(("session_detect", per_fold(tid, lambda g: session_rate(g, tid))))
            for s in range(1, k + 1):
                metrics.append((f"true_detect_p{s}", per_fold(tid, lambda g, s=s: rate(g, tid, s))))
        metrics.append(("delta_star", per_fold(tid, dstar)))
        rows.extend(Row(cell.id, label, m, mean, sem) for m, (mean, sem) in metrics)

    sens = [r for r in rows if r.topic != setup.catalog[0].label]
    for metric in dict.fromkeys(r.metric for r in sens):
        sel = [r for r in sens if r.metric == metric]
        rows.append(Row(cell.id, AVERAGE, metric, float(np.mean([r.mean for r in sel])),
                        float(np.mean([r.sem for r in sel]))))
    return rows


def run_campaign(config: CampaignConfig, setup: Setup | None = None) -> DetectionReport:
    setup = setup or prepare(config)
    if config.workers > 1 and len(config.cells) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_cell_job, [(setup, config, c) for c in config.cells]))
    else:
        results = [run_cell(setup, config, c) for c in config.cells]
    rows, probes = [], []
    for cell, recs in zip(config.cells, results):
        rows.extend(summarise(recs, setup, config, cell))
        probes.extend(recs)
    meta = {
        "seed": config.seed,
        "lambda": setup.model.lam,
        "prior_rmse": setup.model.prior_rmse(),
        "labels": list(setup.catalog.labels),
        "folds": config.folds,
        "sessions_per_cell": config.sessions_per_cell,
        "probes_per_session": config.probes_per_session,
        "cells": [c.id for c in config.cells],
    }
    return DetectionReport(rows, meta, probes)


# -- reports -----------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def report_csv(report: DetectionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        w.writerow((r.condition, r.topic, r.metric, _num(r.mean), _num(r.sem)))
    return buf.getvalue()


def parse_report_csv(text: str) -> DetectionReport:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ConfigError(f"not a report CSV (header {header})")
    rows = [Row(c, t, m, float(mean), float(sem)) for c, t, m, mean, sem in reader]
    return DetectionReport(rows)


def pct(x: float) -> str:
    return f"{100 * x:.1f}%"


def report_text(report: DetectionReport) -> str:
    """Per-condition tables of true / false detection, SEM and delta*."""
    lines = []
    for cond in report.conditions:
        lines.append(f"== {cond} ==")
        lines.append(f"{'topic':<14}{'True / False Detect':<22}{'SEM':<8}{'Session':<10}{'delta*':<8}")
        sems = []
        for topic in report.topics(cond):
            rows = {r.metric: r for r in report.rows if r.condition == cond and r.topic == topic}
            if "true_detect" in rows:
                true, false = rows["true_detect"], rows["false_detect"]
                sems.append(true.sem)
                sess = pct(rows["session_detect"].mean) if "session_detect" in rows else "-"
                rates = f"{pct(true.mean)} / {pct(false.mean)}"
                sem = pct(true.sem)
            else:
                rates = f"- / {pct(rows['false_detect'].mean)}" if "false_detect" in rows else "-"
                sem, sess = "-", "-"
            d = f"{rows['delta_star'].mean:.3f}" if "delta_star" in rows else "-"
            lines.append(f"{topic:<14}{rates:<22}{sem:<8}{sess:<10}{d:<8}")
        if sems:
            lines.append(f"SEM range {pct(min(sems))} - {pct(max(sems))}")
        lines.append("")
    return "\n".join(lines)


def scores_csv(report: DetectionReport) -> str:
    labels = report.meta.get("labels")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for p in report.probes:
        label = labels[p.topic_id] if labels else str(p.topic_id)
        w.writerow((p.condition, p.session_id, p.probe_step, label, p.detected,
                    " ".join(_num(x) for x in p.pri_plus), " ".join(_num(x) for x in p.z)))
    return buf.getvalue()


def write_report(report: DetectionReport, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {
        "report.csv": report_csv(report),
        "report.json": json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        "report.txt": report_text(report),
    }
    if report.probes:
        files["scores.csv"] = scores_csv(report)
    out = []
    for name, text in files.items():
        path = d / name
        path.write_text(text, encoding="utf-8")
        out.append(path)
    return out


def read_report(directory) -> DetectionReport:
    d = Path(directory)
    try:
        report = parse_report_csv((d / "report.csv").read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read report from {d}: {exc}") from exc
    meta_path = d / "report.json"
    if meta_path.exists():
        report.meta = json.loads(meta_path.read_text("utf-8")).get("meta", {})
    return report


def save_model(setup: Setup, path):
    data = {"model": setup.model.to_dict(), "prior_rmse": setup.model.prior_rmse()}
    if setup.stats is not None:
        data["stats"] = setup.stats.to_dict()
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
