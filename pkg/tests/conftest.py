from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from priplus.corpus import TopicCatalog, TrainingCorpus, fit_lambda, fit_topic_model
from priplus.harness import CampaignConfig, Cell, prepare
from priplus.scripting import load_proxy_topics
from priplus.simengine import AdInventory, World

DATA = Path(str(resources.files("priplus") / "data"))


def synthetic_corpus(rows):
    """``rows`` is a list of (label, text); labels other than 'other' become topics in order."""
    labels = list(dict.fromkeys(lab for lab, _ in rows))
    catalog = TopicCatalog.from_labels(labels)
    return catalog, TrainingCorpus(tuple((catalog.index(lab), text) for lab, text in rows))


@pytest.fixture(scope="session")
def catalog():
    return TopicCatalog.load(DATA / "catalog.ini")


@pytest.fixture(scope="session")
def corpus(catalog):
    return TrainingCorpus.load(DATA / "corpus.tsv", catalog)


@pytest.fixture(scope="session")
def model(corpus, catalog):
    lam, _ = fit_lambda(corpus, catalog)
    return fit_topic_model(corpus, catalog, lam)


@pytest.fixture(scope="session")
def proxies(catalog):
    return load_proxy_topics(DATA / "proxy_topics.ini", catalog.sensitive_stems())


@pytest.fixture(scope="session")
def world(catalog, proxies):
    return World.build(catalog, AdInventory.load(DATA / "adverts.tsv", catalog), proxies)


@pytest.fixture(scope="session")
def small_setup():
    config = CampaignConfig(sessions_per_cell=7, training_sessions=4, seed=3,
                            cells=(Cell.parse("baseline"), Cell.parse("proxy_no_click")))
    return config, prepare(config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
