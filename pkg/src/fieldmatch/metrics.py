"""Ranking metrics for one solution's candidate list.

All functions take relevance labels in rank order (best first) except
``auc``, which needs the scores to handle ties.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

K_VALUES = (10, 100, 500)


def average_precision(labels) -> float:
    """Mean of precision@r over the ranks r holding a positive."""
    r = np.asarray(labels) != 0
    if not r.any():
        raise ValueError("average precision needs at least one positive")
    hits = np.cumsum(r)
    ranks = np.arange(1, len(r) + 1)
    return float(np.mean(hits[r] / ranks[r]))


def precision_at_k(labels, k: int) -> float:
    r = np.asarray(labels) != 0
    k = min(k, len(r))
    if k == 0:
        return 0.0
    return float(r[:k].sum() / k)


def recall_at_k(labels, k: int) -> float:
    r = np.asarray(labels) != 0
    total = r.sum()
    if total == 0:
        raise ValueError("recall needs at least one positive")
    return float(r[: min(k, len(r))].sum() / total)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) != 0
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positives and negatives")
    ranks = rankdata(scores)  # average ranks handle ties
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def rank_order(ids, scores) -> np.ndarray:
    """Indices sorting by descending score, ties by ascending id."""
    ids = np.asarray(ids, dtype=object)
    scores = np.asarray(scores, dtype=np.float64)
    id_rank = np.argsort(np.argsort(ids, kind="stable"), kind="stable")
    return np.lexsort((id_rank, -scores))


def solution_metrics(ids, scores, labels, ks=K_VALUES) -> dict[str, float]:
    """AP, AUC, P@k and R@k for one solution's pool; AP/R@k need a positive, AUC a negative too."""
    order = rank_order(ids, scores)
    ranked = np.asarray(labels)[order]
    out = {}
    if ranked.any():
        out["AP"] = average_precision(ranked)
        for k in ks:
            out[f"R@{k}"] = recall_at_k(ranked, k)
        if not ranked.all():
            out["AUC"] = auc(scores, labels)
    for k in ks:
        out[f"P@{k}"] = precision_at_k(ranked, k)
    return out
