"""Detect and measure search-engine topic learning from advert content.

PRI+ scores the adverts on probe response pages against a smoothed topic
model, mutual plausible deniability summarises the worst posterior gap, and a
simulated engine lets noise, click and proxy-topic defences be compared.
"""

from .corpus import TopicCatalog, TopicModel, TrainingCorpus, fit_lambda, fit_topic_model
from .deniability import delta_k, delta_star, epsilon_bound
from .errors import ConfigError, ContractViolation, PriPlusError, ScriptParseError
from .estimator import ResponsePage, detect, normalize, pri_plus_score, pri_score
from .text import tokenize

__version__ = "0.1.0"
