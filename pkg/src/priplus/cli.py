"""Command line entry point: ``priplus train|run|score|report``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import TopicCatalog, TrainingCorpus, fit_lambda, fit_topic_model, load_model
from .errors import ConfigError
from .estimator import ResponsePage, TopicStats, detect, normalize, pri_plus_score
from .harness import CampaignConfig, prepare, read_report, report_text, run_campaign, save_model, write_report


def cmd_train(args):
    catalog = TopicCatalog.load(args.catalog)
    corpus = TrainingCorpus.load(args.corpus, catalog)
    rmse = None
    if args.lam is not None:
        lam = args.lam
    else:
        lam, rmse = fit_lambda(corpus, catalog)
    model = fit_topic_model(corpus, catalog, lam)
    data = {"model": model.to_dict(), "prior_rmse": model.prior_rmse()}
    Path(args.out).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    print(f"lambda={lam:g} prior_rmse={model.prior_rmse():.6f} words={len(model.dictionary)} -> {args.out}")
    if rmse is not None and rmse > 0.01:
        print(f"warning: priors are not close to uniform (rmse {rmse:.4f})", file=sys.stderr)
    return 0


def cmd_run(args):
    config = CampaignConfig.from_file(args.config, seed=args.seed, workers=args.workers,
                                      honor_waits=args.honor_waits or None)
    out = Path(args.out or config.out_dir or "results")
    setup = prepare(config)
    report = run_campaign(config, setup)
    write_report(report, out)
    save_model(setup, out / "model.json")
    print(report_text(report))
    print(f"wrote {out}")
    return 0


def _read_pages(path):
    text = Path(path).read_text("utf-8")
    try:
        data = json.loads(text)
    except ValueError:
        data = [json.loads(line) for line in text.splitlines() if line.strip()]
    if isinstance(data, dict):
        data = data.get("pages", [data])
    return [ResponsePage.from_dict(d) for d in data]


def cmd_score(args):
    model = load_model(args.model)
    raw = json.loads(Path(args.model).read_text("utf-8"))
    stats = TopicStats.from_dict(raw["stats"]) if "stats" in raw else None
    try:
        pages = _read_pages(args.pages)
    except (OSError, ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"cannot read pages {args.pages}: {exc}") from exc
    for page in pages:
        p = pri_plus_score(page, model)
        rec = {"query": page.query, "step_index": page.step_index,
               "pri_plus": dict(zip(model.labels, np.round(p.scores, 6).tolist()))}
        if stats is not None:
            rec["detected"] = model.labels[detect(normalize(p, stats))]
        print(json.dumps(rec))
    return 0


def cmd_report(args):
    print(report_text(read_report(args.indir)))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="priplus", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit the topic model on an advert corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--catalog", required=True)
    g = t.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--fit-lambda", action="store_true", help="grid-search lambda (default)")
    t.add_argument("--out", default="model.json")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="run a simulated campaign and write reports")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--honor-waits", action="store_true", help="sleep for each step's wait")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="score response pages with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--pages", required=True, help="JSON list or JSON lines of response pages")
    s.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="print the text table of a report directory")
    p.add_argument("--in", dest="indir", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
