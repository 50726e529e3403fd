import json

import numpy as np
import pytest

from hierrank.data import Candidate, QuestionGroup
from hierrank.evaluation import average_precision, evaluate_corpus, reciprocal_rank
from oracles import brute_average_precision, brute_reciprocal_rank, random_instance


class TestAveragePrecision:
    def test_top_ranked(self):
        assert average_precision([0.9, 0.5, 0.1], [1, 0, 0]) == 1.0

    def test_ranks_two_and_three(self):
        ap = average_precision([0.9, 0.7, 0.5, 0.1], [0, 1, 1, 0])
        assert ap == pytest.approx((1 / 2 + 2 / 3) / 2, abs=1e-12)
        assert ap == pytest.approx(0.58333, abs=1e-5)

    def test_no_positive(self):
        with pytest.raises(ValueError, match="no positive"):
            average_precision([0.1, 0.2], [0, 0])


class TestReciprocalRank:
    def test_first(self):
        assert reciprocal_rank([0.9, 0.1], [1, 0]) == 1.0

    def test_third(self):
        assert reciprocal_rank([0.9, 0.8, 0.7], [0, 0, 1]) == pytest.approx(1 / 3, abs=1e-12)

    def test_tie_break_by_index(self):
        assert reciprocal_rank([0.5, 0.5], [1, 0]) == 1.0
        assert reciprocal_rank([0.5, 0.5], [0, 1]) == 0.5

    def test_no_positive(self):
        with pytest.raises(ValueError):
            reciprocal_rank([0.3], [0])


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        scores, labels = random_instance(rng)
        assert abs(average_precision(scores, labels) - brute_average_precision(scores, labels)) <= 1e-12
        assert abs(reciprocal_rank(scores, labels) - brute_reciprocal_rank(scores, labels)) <= 1e-12


def test_monotone_transform_invariance():
    rng = np.random.default_rng(12)
    for _ in range(200):
        s = rng.standard_normal(7)
        y = rng.permutation([1, 1, 0, 0, 0, 0, 0])
        for t in (np.exp(s), 3 * s + 1, np.arctan(s)):
            assert average_precision(t, y) == average_precision(s, y)
            assert reciprocal_rank(t, y) == reciprocal_rank(s, y)


def test_single_positive_ap_equals_rr():
    rng = np.random.default_rng(13)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        y = np.zeros(n, int)
        y[rng.integers(n)] = 1
        s = rng.standard_normal(n)
        assert average_precision(s, y) == reciprocal_rank(s, y)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_reversed_perfect_ordering(n):
    y = [0] * (n - 1) + [1]
    s = list(range(n, 0, -1))
    assert average_precision(s, y) == pytest.approx(1 / n)
    assert reciprocal_rank(s, y) == pytest.approx(1 / n)


class LookupModel:
    """Stand-in model returning fixed scores per question."""

    def __init__(self, table):
        self.table = table

    def score(self, group):
        return np.asarray(self.table[group.qid], dtype=float)


def make_group(qid, labels):
    return QuestionGroup(qid, ("q",), tuple(Candidate((f"a{i}",), y) for i, y in enumerate(labels)))


class TestEvaluateCorpus:
    def test_single_question(self):
        g = make_group("a", [0, 1, 1, 0])
        report = evaluate_corpus([g], LookupModel({"a": [0.9, 0.7, 0.5, 0.1]}))
        assert report.map == pytest.approx(0.58333, abs=1e-5)
        assert report.questions[0].order == [0, 1, 2, 3]

    def test_mean_over_questions(self):
        groups = [make_group("a", [0, 1]), make_group("b", [1, 0])]
        report = evaluate_corpus(groups, LookupModel({"a": [0.9, 0.1], "b": [0.9, 0.1]}))
        assert report.map == pytest.approx(0.75)
        assert report.mrr == pytest.approx(0.75)
        assert report.n_questions == 2

    def test_perfect_model(self):
        groups = [make_group("a", [0, 1, 1]), make_group("b", [1, 0, 0])]
        model = LookupModel({g.qid: g.labels for g in groups})
        report = evaluate_corpus(groups, model)
        assert report.map == report.mrr == 1.0

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate_corpus([], LookupModel({}))

    def test_json(self, tmp_path):
        report = evaluate_corpus([make_group("a", [1, 0])], LookupModel({"a": [0.2, 0.4]}), {"seed": 3})
        report.save(tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        assert data["map"] == 0.5 and data["metadata"] == {"seed": 3}
        assert data["questions"][0]["order"] == [1, 0]
