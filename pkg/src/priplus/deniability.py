"""Indistinguishability ratios, mutual plausible deniability and checkers for
the inequalities that relate scores, priors and posteriors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNIFORM_PRIOR_RMSE = 0.01
TOL = 1e-12


def _vec(x) -> np.ndarray:
    return np.asarray(getattr(x, "scores", x), dtype=float)


def indistinguishability_ratio(posterior: float, prior: float) -> float:
    if prior <= 0:
        raise ValueError("prior must be strictly positive")
    return posterior / prior


def within_band(ratio: float, epsilon: float) -> bool:
    return math.exp(-epsilon) <= ratio <= math.exp(epsilon)


def _require_uniform(priors):
    if priors is None:
        return
    p = np.asarray(priors, float)
    rmse = float(np.sqrt(np.mean((p - 1.0 / len(p)) ** 2)))
    if rmse > UNIFORM_PRIOR_RMSE:
        raise ValueError(
            f"delta bound needs equiprobable priors; prior RMSE from uniform is {rmse:.4f} "
            f"(> {UNIFORM_PRIOR_RMSE})"
        )


def delta_k(scores, priors=None) -> float:
    """Best-case deniability gap ``(max - min) / (N + 1)`` for one probe step.

    Pass ``priors`` to have the equal-prior precondition checked.
    """
    s = _vec(scores)
    _require_uniform(priors)
    return float((s.max() - s.min()) / len(s))


def delta_star(session_scores, priors=None) -> float:
    if len(session_scores) == 0:
        raise ValueError("delta_star needs at least one probe step")
    return max(delta_k(s, priors) for s in session_scores)


def epsilon_bound(session_scores) -> float:
    """Smallest epsilon with every score inside ``[e^-eps, e^eps]``; inf if any score is 0."""
    worst = 0.0
    for s in session_scores:
        s = _vec(s)
        if np.any(s <= 0):
            return math.inf
        worst = max(worst, float(np.max(np.abs(np.log(s)))))
    return worst


@dataclass(frozen=True)
class DeniabilityReport:
    delta_per_step: tuple[float, ...]
    delta_star: float
    epsilon_bound: float


def deniability_report(session_scores, priors=None) -> DeniabilityReport:
    deltas = tuple(delta_k(s, priors) for s in session_scores)
    if not deltas:
        raise ValueError("no probe steps")
    return DeniabilityReport(deltas, max(deltas), epsilon_bound(session_scores))


@dataclass(frozen=True)
class Violation:
    name: str
    margin: float

    def __str__(self):
        return f"{self.name} violated by {self.margin:.3g}"


def check_propositions(scores, priors, posterior, epsilon=None) -> list[Violation]:
    """Evaluate every bound linking scores, priors and posterior; return the broken ones.

    ``margin`` is how far the inequality misses (always positive for a
    violation). With ``epsilon`` the indistinguishability consequences are
    checked too.
    """
    m = _vec(scores)
    p = np.asarray(priors, float)
    post = np.asarray(posterior, float)
    n1 = len(m)
    p_hi, p_lo = p.max(), p.min()
    pi_hi, pi_lo = post.max(), post.min()
    m_hi, m_lo, m_bar, m_sum = m.max(), m.min(), m.mean(), m.sum()

    out = []

    def need(name, lhs, rhs):
        tol = TOL * max(1.0, abs(lhs), abs(rhs))
        if lhs > rhs + tol:
            out.append(Violation(name, float(lhs - rhs)))

    need("scores non-negative", 0.0, m_lo)
    need("(a) min posterior / max prior <= min score", pi_lo / p_hi, m_lo)
    need("(b) min score <= mean score", m_lo, m_bar)
    need("(c) mean score <= max score", m_bar, m_hi)
    need("(d) max score <= max posterior / min prior", m_hi, pi_hi / p_lo)
    need("sum lower bound 1/max prior", 1.0 / p_hi, m_sum)
    need("sum upper bound 1/min prior", m_sum, 1.0 / p_lo)

    gap = pi_hi - pi_lo
    for i, v in enumerate(post):
        need(f"posterior {i} within pairwise gap of uniform", abs(v - 1.0 / n1), gap)

    if np.allclose(p, 1.0 / n1, rtol=0, atol=TOL):
        need("mean score == 1 (upper)", m_bar, 1.0)
        need("mean score == 1 (lower)", 1.0, m_bar)
        need("min posterior == min score/(N+1)", abs(pi_lo - m_lo / n1), 0.0)
        need("max posterior == max score/(N+1)", abs(pi_hi - m_hi / n1), 0.0)

    if epsilon is not None:
        need("min prior e^-eps <= min posterior", p_lo * math.exp(-epsilon), pi_lo)
        need("min posterior <= max prior * min score", pi_lo, p_hi * m_lo)
        need("min prior * max score <= max posterior", p_lo * m_hi, pi_hi)
        need("max posterior <= max prior e^eps", pi_hi, p_hi * math.exp(epsilon))
    return out


def scores_from_posterior(priors, posterior) -> np.ndarray:
    """Exact scores ``posterior_i / prior_i``."""
    p = np.asarray(priors, float)
    if np.any(p <= 0):
        raise ValueError("priors must be strictly positive")
    return np.asarray(posterior, float) / p
