import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priplus.corpus import Dictionary, TopicModel, fit_topic_model
from priplus.errors import ConfigError
from priplus.estimator import (Item, PriScoreVector, ResponsePage, TopicStats, detect, detect_session,
                               fit_topic_stats, normalize, pri_plus_score, pri_score, stats_from_scores)
from conftest import synthetic_corpus

WORDS = ["ant", "bee", "cat", "dog"]


def page(text, **kw):
    return ResponsePage("q", advert_items=(Item(text, "", "u"),) if text else (), **kw)


def model_from(counts, lam=0.0):
    labels = tuple(["other"] + [f"t{i}" for i in range(1, len(counts))])
    return TopicModel(labels, lam, Dictionary(WORDS), np.array(counts, float))


def oracle_pri_plus(counts, lam, text):
    """Per-word summation straight from the definitions."""
    from priplus.text import tokenize
    toks = [t for t in tokenize(text) if t in WORDS]
    n = len(counts)
    sm = [[lam + (1 - lam) * c for c in row] for row in counts]
    col = [sum(sm[i][j] for i in range(n)) for j in range(len(WORDS))]
    phi_c = [c / sum(col) for c in col]
    page_n = [lam + (1 - lam) * toks.count(w) for w in WORDS]
    psi = [x / sum(page_n) for x in page_n]
    out = []
    for i in range(n):
        phi_i = [x / sum(sm[i]) for x in sm[i]]
        out.append(sum(phi_i[j] / phi_c[j] * psi[j] for j in range(len(WORDS))))
    return out


class TestPage:
    def test_step_index(self):
        with pytest.raises(ValueError):
            ResponsePage("q", step_index=0)

    def test_dict_round_trip(self):
        p = ResponsePage("q", (Item("t", "s", "u", 1),), (Item("a", "b", "c", 2),), 3, True)
        assert ResponsePage.from_dict(p.to_dict()) == p

    def test_organic_ignored(self):
        m = model_from([[2, 1, 0, 1], [0, 1, 2, 0]])
        p = ResponsePage("q", organic_items=(Item("ant ant ant", "", "u"),))
        assert np.array_equal(pri_plus_score(p, m).scores, np.ones(2))


class TestPriScore:
    def test_neutral_words_score_one(self):
        # "cat" has the same share in topic 1 as in the whole corpus
        m = model_from([[1, 0, 1, 1], [1, 1, 1, 0]])
        assert pri_score(page("cat"), m, 1) == pytest.approx(1.0)

    def test_empty_page(self):
        assert pri_score(page(""), model_from([[1, 1, 0, 0], [0, 0, 1, 1]]), 0) == 1.0

    def test_unseen_dictionary_word(self):
        with pytest.raises(ConfigError):
            model_from([[1, 0, 0, 0], [0, 1, 0, 0]])

    def test_against_oracle(self):
        counts = [[3, 1, 0, 0], [0, 1, 2, 1]]
        m = model_from(counts)
        assert pri_score(page("cat cat dog"), m, 1) == pytest.approx(oracle_pri_plus(counts, 0, "cat cat dog")[1])

    def test_bad_topic(self):
        with pytest.raises(ValueError):
            pri_score(page("ant"), model_from([[1, 0, 1, 0], [0, 1, 0, 1]]), 2)


class TestPriPlus:
    def test_empty_page_all_ones(self, model):
        p = pri_plus_score(page(""), model)
        assert np.array_equal(p.scores, np.ones(model.n_topics))
        p = pri_plus_score(page("zzz unknown words"), model)
        assert np.array_equal(p.scores, np.ones(model.n_topics))

    @pytest.mark.parametrize("lam", [0.0, 0.01, 0.2])
    def test_against_oracle(self, lam):
        counts = [[4, 1, 0, 1], [1, 0, 3, 2], [0, 2, 2, 1]]
        m = model_from(counts, lam)
        for text in ["ant", "cat dog dog", "bee bee ant cat"]:
            assert np.allclose(pri_plus_score(page(text), m).scores, oracle_pri_plus(counts, lam, text), atol=1e-12)

    def test_balanced_two_topics_sum(self):
        m = model_from([[3, 1, 0, 0], [0, 1, 1, 2]], 0.01)  # equal totals
        for text in ["ant", "bee cat", "dog dog ant"]:
            assert pri_plus_score(page(text), m).scores.sum() == pytest.approx(2, abs=1e-9)

    def test_pure_topic_argmax(self):
        m = model_from([[3, 1, 0, 0], [0, 0, 2, 2]], 0.01)
        assert int(np.argmax(pri_plus_score(page("cat dog"), m).scores)) == 1
        assert int(np.argmax(pri_plus_score(page("ant ant"), m).scores)) == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 6), min_size=4, max_size=4), min_size=2, max_size=5),
           st.lists(st.sampled_from(WORDS), min_size=1, max_size=12), st.sampled_from([0.0, 0.01, 0.2]))
    def test_sum_bounds(self, rows, words, lam):
        for r in rows:
            r[0] += 1
        for j in range(4):
            rows[-1][j] += 1
        m = model_from(rows, lam)
        s = pri_plus_score(page(" ".join(words)), m).scores
        assert np.all(s >= 0) and np.all(np.isfinite(s))
        shares = m.priors
        assert 1 / shares.max() - 1e-9 <= s.sum() <= 1 / shares.min() + 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 6), min_size=4, max_size=4), min_size=2, max_size=5),
           st.lists(st.sampled_from(WORDS), min_size=1, max_size=12))
    def test_equal_totals_sum(self, rows, words):
        for r in rows:
            r[:] = [c + 1 for c in r]
            r[3] += 40 - sum(r)
        m = model_from(rows, 0.05)
        assert pri_plus_score(page(" ".join(words)), m).scores.sum() == pytest.approx(len(rows), abs=1e-9)

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_duplication_invariance_unsmoothed(self, k):
        m = model_from([[4, 1, 0, 1], [1, 0, 3, 2]], 0.0)
        text = "ant cat cat dog"
        base = pri_plus_score(page(text), m).scores
        assert np.allclose(pri_plus_score(page(" ".join([text] * k)), m).scores, base, atol=1e-12)
        assert pri_score(page(" ".join([text] * k)), m, 1) == pytest.approx(pri_score(page(text), m, 1))


class TestStats:
    def test_identical_pages(self):
        v = np.array([1.0, 2.0])
        stats = stats_from_scores([(0, v), (0, v), (1, v), (1, v)], 2)
        assert np.array_equal(stats.mean[0], v)
        assert np.all(stats.std == 1e-6)

    def test_sample_std(self):
        stats = stats_from_scores([(0, [1.0, 0]), (0, [3.0, 0]), (1, [0, 0]), (1, [0, 0])], 2)
        assert stats.mean[0, 0] == 2.0
        assert stats.std[0, 0] == pytest.approx(np.sqrt(2))

    def test_two_pass_oracle(self, rng):
        rows = [(int(rng.integers(3)), rng.gamma(2.0, size=3)) for _ in range(100)]
        rows += [(t, rng.gamma(2.0, size=3)) for t in range(3) for _ in range(2)]
        stats = stats_from_scores(rows, 3)
        for t in range(3):
            xs = [v for tid, v in rows if tid == t]
            for j in range(3):
                col = [x[j] for x in xs]
                mean = sum(col) / len(col)
                var = sum((c - mean) ** 2 for c in col) / (len(col) - 1)
                assert stats.mean[t, j] == pytest.approx(mean, abs=1e-9)
                assert stats.std[t, j] == pytest.approx(max(var ** 0.5, 1e-6), abs=1e-9)

    def test_too_few_pages(self):
        with pytest.raises(ConfigError):
            stats_from_scores([(0, [1, 1]), (0, [1, 1]), (1, [1, 1])], 2)

    def test_fit_from_pages(self):
        m = model_from([[3, 1, 0, 0], [0, 0, 2, 2]], 0.01)
        pages = [(0, page("ant")), (0, page("ant bee")), (1, page("cat")), (1, page("dog cat"))]
        stats = fit_topic_stats(pages, m)
        assert stats.mean.shape == (2, 2) and stats.counts == (2, 2)
        assert TopicStats.from_dict(stats.to_dict()).mean.tolist() == stats.mean.tolist()


class TestNormalizeDetect:
    def stats(self, rng):
        return TopicStats(rng.gamma(2.0, size=(3, 3)), rng.uniform(0.1, 1.0, size=(3, 3)))

    def test_identity_and_unit_offsets(self, rng):
        s = self.stats(rng)
        assert normalize(PriScoreVector(s.mean[1]), s).z[1] == 0
        assert normalize(s.mean[2] + s.std[2], s).z[2] == pytest.approx(3)

    def test_duplicate_formula(self, rng):
        s = self.stats(rng)
        for _ in range(20):
            p = rng.gamma(2.0, size=3)
            z = normalize(p, s).z
            for i in range(3):
                ref = sum(((p[j] - s.mean[i][j]) / s.std[i][j]) ** 2 for j in range(3))
                assert z[i] == pytest.approx(ref, abs=1e-12)

    def test_detect_examples(self):
        assert detect([0.5, 2.0, 3.0]) == 0
        assert detect([1.0, 1.0, 5.0]) == 0
        assert detect([3.0, 0.2, 0.2 + 1e-13]) == 0
        assert detect([3.0, 0.2, 5.0]) == 1

    def test_empty_page_ties_to_other(self):
        s = TopicStats(np.ones((3, 3)), np.ones((3, 3)))
        assert detect(normalize(np.ones(3), s)) == 0

    @given(st.lists(st.integers(0, 10**6), min_size=2, max_size=8))
    def test_monotone_invariance(self, z):
        # integer-valued Z keeps distinct values far outside the tie tolerance
        z = np.array(z, float)
        assert detect(z) == detect(np.sqrt(z)) == detect(np.log1p(z))

    def test_session(self):
        assert detect_session([0, 0, 1, 0, 0], 1)
        assert not detect_session([0, 0, 0, 0, 0], 1)
        assert detect_session([1] * 5, 1)
        with pytest.raises(ValueError):
            detect_session([], 1)
