"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py -s`` or
``python3 tests/test_acceptance.py``.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from priplus.corpus import LAMBDA_GRID, TopicCatalog, TrainingCorpus, fit_lambda, fit_topic_model
from priplus.deniability import check_propositions, epsilon_bound
from priplus.estimator import Item, ResponsePage, pri_plus_score
from priplus.harness import CampaignConfig, Cell, default_grid, prepare, report_csv, run_campaign
from priplus.scripting import PROBE, load_script, parse_script, render_script
from priplus.simengine import EngineConfig
from priplus.text import tokenize
from conftest import DATA

SEED = 2016
LATE_PROBES = ("true_detect_p3", "true_detect_p4", "true_detect_p5")
TABLE_WAITS = [7, 19, 13, 4, 8, 20, 15, 17, 2, 11, 13, 1, 8, 9, 5, 20, 0]


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


def shipped_config(**kw):
    return CampaignConfig.from_file(DATA / "campaign.ini", seed=SEED, workers=1, **kw)


def late_true_detect(report, cell):
    return float(np.mean([report.value(cell, "average", m) for m in LATE_PROBES]))


@pytest.fixture(scope="module")
def baseline_run():
    config = shipped_config(cells=(Cell.parse("baseline"),))
    start = time.perf_counter()
    report = run_campaign(config)
    return config, report, time.perf_counter() - start


@pytest.fixture(scope="module")
def defence_run():
    cells = tuple(Cell.parse(c) for c in ("baseline", "noise_high")) + tuple(c for c in default_grid() if c.proxy)
    return run_campaign(shipped_config(cells=cells))


def test_c1_sum_invariant(verdict):
    rng = np.random.default_rng(SEED)
    words = ["alpha", "bravo", "charli", "delta", "echo", "foxtrot", "golf", "hotel",
             "india", "juliet", "kilo", "lima", "mike", "novemb", "oscar", "papa"]
    assert all(tokenize(w) == [w] for w in words)
    start = time.perf_counter()
    # every topic draws the same number of keyword tokens, from different mixes
    catalog = TopicCatalog.from_labels(["other", "t1", "t2", "t3"])
    entries = []
    for tid in range(4):
        weights = rng.dirichlet(np.ones(len(words)))
        tokens = list(words) + list(rng.choice(words, size=184, p=weights))
        entries.append((tid, " ".join(tokens)))
    corpus = TrainingCorpus(tuple(entries))
    model = fit_topic_model(corpus, catalog, 0.01)
    worst_sum = worst_mean = 0.0
    for _ in range(1000):
        ads = tuple(Item(" ".join(rng.choice(words, size=rng.integers(1, 8))), "", "u")
                    for _ in range(rng.integers(1, 6)))
        p = np.asarray(pri_plus_score(ResponsePage("q", (), ads), model).scores)
        worst_sum = max(worst_sum, abs(p.sum() - 4))
        worst_mean = max(worst_mean, abs(p.mean() - 1))
    elapsed = time.perf_counter() - start
    ok = worst_sum <= 1e-9 and worst_mean <= 1e-9 and elapsed < 5
    verdict(1, ok, f"max |sum - 4| = {worst_sum:.2e}, max |mean - 1| = {worst_mean:.2e}, {elapsed:.2f}s")


def test_c2_inequalities(verdict):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    broken = []
    for trial in range(10_000):
        n = int(rng.integers(2, 13))
        if trial % 4 == 0:
            priors = np.full(n, 1.0 / n)
        else:
            priors = 0.01 + (1 - 0.01 * n) * rng.dirichlet(np.ones(n))
        posterior = rng.dirichlet(np.full(n, rng.uniform(0.2, 5)))
        scores = posterior / priors
        broken += check_propositions(scores, priors, posterior, epsilon_bound([scores]))
    elapsed = time.perf_counter() - start
    ok = not broken and elapsed < 5
    verdict(2, ok, f"{len(broken)} violations in 10^4 pairs, {elapsed:.2f}s"
                   + (f", first: {broken[0]}" if broken else ""))


def grid_oracle(corpus, n_topics):
    words = sorted({w for _, text in corpus.entries for w in tokenize(text)})
    raw = {}
    for tid, text in corpus.entries:
        for w in tokenize(text):
            raw[tid, w] = raw.get((tid, w), 0) + 1
    losses = []
    for lam in LAMBDA_GRID:
        lam = float(lam)
        per_topic = [sum(lam + (1 - lam) * raw.get((i, w), 0) for w in words) for i in range(n_topics)]
        total = sum(per_topic)
        losses.append(sum((1 / n_topics - t / total) ** 2 for t in per_topic))
    lowest = min(losses)
    best = next(i for i, v in enumerate(losses) if v <= lowest + 1e-15)
    return float(LAMBDA_GRID[best]), math.sqrt(lowest / n_topics)


def test_c3_lambda_fit(verdict):
    catalog = TopicCatalog.load(DATA / "catalog.ini")
    corpus = TrainingCorpus.load(DATA / "corpus.tsv", catalog)
    lam, rmse = fit_lambda(corpus, catalog)
    o_lam, o_rmse = grid_oracle(corpus, len(catalog))
    ok = lam == o_lam and rmse <= 0.01 and math.isclose(rmse, o_rmse, rel_tol=1e-9)
    verdict(3, ok, f"lambda {lam} (oracle {o_lam}), prior RMSE {rmse:.5f}")


def test_c4_detection(verdict, baseline_run):
    config, report, elapsed = baseline_run
    true = late_true_detect(report, "baseline")
    false = report.value("baseline", "average", "false_detect")
    other = report.value("baseline", "other", "false_detect")
    ok = true >= 0.90 and false <= 0.02 and elapsed < 60
    verdict(4, ok, f"true-detect p3-5 {true:.1%}, false-detect {false:.1%} "
                   f"(any sensitive on Other: {other:.1%}), {elapsed:.1f}s")


def test_c5_noise_fails(verdict, defence_run):
    drops = {}
    for metric in ("true_detect",) + LATE_PROBES:
        drops[metric] = (defence_run.value("baseline", "average", metric)
                         - defence_run.value("noise_high", "average", metric))
    worst = max(drops.values())
    verdict(5, worst < 0.10, f"largest baseline to noise_high drop {worst * 100:.1f} pp "
                              f"(all probes {drops['true_detect'] * 100:.1f} pp)")


def test_c6_proxy_works(verdict, defence_run):
    report = defence_run
    labels = [t for t in report.topics("baseline") if t not in ("other", "average")]
    proxy_cells = [c for c in report.conditions if c.startswith("proxy")]
    true = {c: report.value(c, "average", "true_detect") for c in proxy_cells}
    dstar = max(report.value(c, t, "delta_star") for c in proxy_cells for t in labels)
    base = report.value("baseline", "average", "delta_star")
    worst_topic = max(report.value(c, t, "true_detect") for c in proxy_cells for t in labels)
    ok = len(proxy_cells) == 5 and max(true.values()) <= 0.05 and dstar <= 0.05 and base >= 0.1
    verdict(6, ok, f"proxy true-detect max over click models {max(true.values()):.1%} "
                   f"(worst single topic {worst_topic:.1%}), proxy delta* max {dstar:.4f}, "
                   f"baseline delta* {base:.3f}")


def test_c7_script(verdict):
    text = (DATA / "scripts" / "gambling.txt").read_text()
    script = load_script(DATA / "scripts" / "gambling.txt")
    probes = script.probe_count()
    waits = [w for _, w in script.steps]
    exact = parse_script(render_script(script)) == script and parse_script(text) == script
    ok = len(script.steps) == 17 and probes == 5 and waits == TABLE_WAITS and exact
    verdict(7, ok, f"{len(script.steps)} queries, {probes} probes, waits match: {waits == TABLE_WAITS}, "
                   f"round trip exact: {exact}")


def test_c8_empty_pages(verdict):
    config = CampaignConfig(sessions_per_cell=7, training_sessions=4, seed=SEED,
                            engine=EngineConfig(ads_per_page=(0, 0)))
    report = run_campaign(config)
    n = len(report.meta["labels"])
    ones = all(r.pri_plus == (1.0,) * n for r in report.probes)
    other = all(r.detected == 0 for r in report.probes)
    dstar = max(r.mean for r in report.rows if r.metric == "delta_star")
    ok = ones and other and dstar == 0 and len(report.conditions) == 13
    verdict(8, ok, f"{len(report.probes)} probe pages over {len(report.conditions)} cells, all ones: {ones}, "
                   f"all Other: {other}, max delta* {dstar}")


def test_c9_determinism(verdict, baseline_run):
    config, report, _ = baseline_run
    again = report_csv(run_campaign(replace(config)))
    first = report_csv(report)
    ok = first.encode() == again.encode()
    verdict(9, ok, f"two runs with seed {config.seed}: {len(first)} bytes, identical: {ok}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
