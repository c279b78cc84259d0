import math

import numpy as np
import pytest

from fieldmatch.metrics import auc, average_precision, precision_at_k, recall_at_k, rank_order, solution_metrics

from helpers import brute_metrics, random_ranking

KS = (1, 3, 10, 500)


def test_average_precision_fixture():
    assert average_precision([1, 0, 1, 0]) == pytest.approx((1 / 1 + 2 / 3) / 2, abs=1e-12)


def test_auc_extremes():
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc([0.1, 0.9], [1, 0]) == 0.0


def test_k_clips_to_list_length():
    assert precision_at_k([1, 0, 1], 500) == pytest.approx(2 / 3)
    assert recall_at_k([1, 0, 1], 500) == 1.0


def test_undefined_cases():
    with pytest.raises(ValueError):
        average_precision([0, 0])
    with pytest.raises(ValueError):
        recall_at_k([0, 0], 1)
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])
    assert "AP" not in solution_metrics(["a", "b"], [0.1, 0.2], [0, 0])


def test_tie_break_by_id():
    assert list(rank_order(["c", "a", "b"], [0.5, 0.5, 0.9])) == [2, 1, 0]


def test_against_brute_force_on_random_rankings():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        scores, labels = random_ranking(rng)
        ids = [f"{i:03d}" for i in range(len(scores))]
        got = solution_metrics(ids, scores, labels, KS)
        ref = brute_metrics(scores, labels, KS)
        assert got.keys() == ref.keys()
        for k in ref:
            assert abs(got[k] - ref[k]) <= 1e-12, (k, scores, labels)


def test_random_scores_give_auc_near_half():
    rng = np.random.default_rng(0)
    labels = np.arange(1000) % 2
    assert abs(auc(rng.random(1000), labels) - 0.5) <= 0.05


def test_metrics_in_unit_interval():
    rng = np.random.default_rng(1)
    for _ in range(50):
        scores, labels = random_ranking(rng)
        for v in solution_metrics([str(i) for i in range(len(scores))], scores, labels).values():
            assert 0 <= v <= 1 and not math.isnan(v)
