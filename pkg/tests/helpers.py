"""Random schemas and records for property tests."""

import numpy as np

from fieldmatch.data import CompanyRecord, FieldSchema, SolutionRecord
from fieldmatch.textseq import Vocab, build_vocab

WORDS = [f"w{i}" for i in range(40)]


def random_schema(rng) -> FieldSchema:
    def names(prefix, lo, hi):
        return tuple(f"{prefix}{i}" for i in range(int(rng.integers(lo, hi + 1))))

    return FieldSchema(names("sd", 1, 3), names("cd", 1, 4), names("sa", 1, 3), names("ca", 1, 4),
                       (("cat0", 3),), ("num0",))


def _text(rng, max_words=8, min_words=0):
    n = int(rng.integers(min_words, max_words + 1))
    return " ".join(rng.choice(WORDS + ["oov"], size=n)) if n else ""


def _tags(rng, min_tags=0):
    return [_text(rng, 3, min(min_tags, 1)) for _ in range(int(rng.integers(min_tags, 4)))]


def random_pair(schema: FieldSchema, rng, complete: bool = False) -> tuple[SolutionRecord, CompanyRecord]:
    """Records with randomly missing, empty or out-of-vocabulary fields.

    With ``complete`` every field is present and holds at least one word.
    """
    drop = 0.0 if complete else 0.2
    least = int(complete)

    def desc(fields):
        return {f: _text(rng, 8, least) for f in fields if rng.random() >= drop}

    def attr(fields):
        return {f: _tags(rng, least) for f in fields if rng.random() >= drop}

    s = SolutionRecord("S", desc(schema.desc_fields_solution), attr(schema.attr_fields_solution))
    c = CompanyRecord("C", desc(schema.desc_fields_company), attr(schema.attr_fields_company), {"cat0": 0}, {"num0": 1.0})
    return s, c


def word_vocab() -> Vocab:
    # "oov" is left out on purpose so [UNK] appears
    return build_vocab([" ".join(WORDS)])


def brute_metrics(scores, labels, ks=(1, 3, 10, 500)):
    """Metrics straight from their definitions, no vectorization or shared helpers."""
    n = len(scores)
    # descending score, ties by original index (ids in these tests are zero-padded indices)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    ranked = [labels[i] for i in order]
    pos = sum(labels)
    out = {}
    if pos:
        precisions = []
        for r in range(1, n + 1):
            if ranked[r - 1]:
                precisions.append(sum(ranked[:r]) / r)
        out["AP"] = sum(precisions) / len(precisions)
        for k in ks:
            out[f"R@{k}"] = sum(ranked[: min(k, n)]) / pos
    if pos and pos < n:
        wins = 0.0
        for i in range(n):
            for j in range(n):
                if labels[i] and not labels[j]:
                    wins += 1.0 if scores[i] > scores[j] else 0.5 if scores[i] == scores[j] else 0.0
        out["AUC"] = wins / (pos * (n - pos))
    for k in ks:
        kk = min(k, n)
        out[f"P@{k}"] = sum(ranked[:kk]) / kk if kk else 0.0
    return out


def random_ranking(rng):
    """Up to 20 candidates with coarse scores so ties occur."""
    n = int(rng.integers(1, 21))
    scores = [float(x) for x in rng.integers(0, 6, n) / 5]
    labels = [int(x) for x in rng.random(n) < rng.uniform(0.1, 0.9)]
    return scores, labels
