"""Supervised fine-tuning, per-solution ranking and offline evaluation."""

from __future__ import annotations

import json
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import tensor as T
from .data import CompanyRecord, MatchExample, SolutionRecord
from .metrics import K_VALUES, rank_order, solution_metrics
from .model import MatchModel, joint_loss

log = logging.getLogger(__name__)

METRIC_NAMES = ("MAP", "AUC") + tuple(f"P@{k}" for k in K_VALUES) + tuple(f"R@{k}" for k in K_VALUES)


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 4
    lr_token: float = 3e-5
    lr_scale: float = 5e-4
    lr_field: float = 5e-5
    seed: int = 0

    @property
    def group_lrs(self) -> dict[str, float]:
        return {"token_level": self.lr_token, "scale": self.lr_scale, "field_level": self.lr_field}


@dataclass
class TrainResult:
    model: MatchModel
    initial_loss: float
    epoch_loss: list[float] = field(default_factory=list)
    val_map: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _take(inputs: dict, idx) -> dict:
    out = {}
    for k, v in inputs.items():
        out[k] = {kk: vv[idx] for kk, vv in v.items()} if isinstance(v, dict) else v[idx]
    return out


def _pairs(examples, solutions, companies):
    return [(solutions[e.solution_id], companies[e.company_id]) for e in examples]


def mean_loss(model: MatchModel, inputs: dict, labels: np.ndarray, batch_size: int = 256) -> float:
    total, n = 0.0, len(labels)
    with torch.no_grad():
        for i in range(0, n, batch_size):
            idx = np.arange(i, min(i + batch_size, n))
            total += float(joint_loss(model.forward(_take(inputs, idx)), labels[idx])) * len(idx)
    return total / max(n, 1)


def train(model: MatchModel, train_examples: list[MatchExample], val_examples: list[MatchExample],
          solutions: dict[str, SolutionRecord], companies: dict[str, CompanyRecord],
          config: TrainConfig) -> TrainResult:
    """Mini-batch Adam on the joint loss; keeps the parameters of the best validation epoch."""
    if not train_examples:
        raise ValueError("training set is empty")
    inputs = model.encode_pairs(_pairs(train_examples, solutions, companies))
    labels = np.array([e.label for e in train_examples], dtype=np.int64)
    result = TrainResult(model, mean_loss(model, inputs, labels))
    if config.epochs == 0:
        return result
    rng = np.random.default_rng(config.seed)
    best_map, best_store = -math.inf, None
    n = len(labels)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for b in range(0, n, config.batch_size):
            idx = order[b : b + config.batch_size]
            model.store.zero_grad()
            loss = joint_loss(model.forward(_take(inputs, idx)), labels[idx])
            loss.backward()
            T.adam_step(model.store, config.group_lrs)
            losses.append(float(loss.detach()) * len(idx))
        result.epoch_loss.append(sum(losses) / n)
        if val_examples:
            vmap = evaluate(model, val_examples, solutions, companies).metrics["MAP"]
            result.val_map.append(vmap)
            if vmap > best_map:
                best_map, best_store, result.best_epoch = vmap, model.store.copy(), epoch
        log.info("epoch %d loss %.4f val MAP %s", epoch, result.epoch_loss[-1],
                 f"{result.val_map[-1]:.4f}" if val_examples else "-")
    if best_store is not None and result.best_epoch != config.epochs - 1:
        model.store = best_store
    model.store.zero_grad()
    return result


def rank_companies(model: MatchModel, solution: SolutionRecord, companies: list[CompanyRecord]) -> list[tuple[str, float]]:
    """Companies by descending combined score, ties by ascending id."""
    if not companies:
        return []
    scores = model.predict([(solution, c) for c in companies])
    ids = [c.id for c in companies]
    return [(ids[i], float(scores[i])) for i in rank_order(ids, scores)]


@dataclass
class MetricsReport:
    metrics: dict[str, float]
    per_solution: dict[str, dict[str, float]]
    fingerprint: str = ""
    seed: int = 0
    pool: str = "labeled"

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "meta", "fingerprint": self.fingerprint, "seed": self.seed, "pool": self.pool}) + "\n")
            for k in METRIC_NAMES:
                if k in self.metrics:
                    fh.write(json.dumps({"kind": "metric", "name": k, "value": self.metrics[k]}) + "\n")
            for sid in sorted(self.per_solution):
                fh.write(json.dumps({"kind": "solution", "id": sid, "metrics": self.per_solution[sid]}, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "MetricsReport":
        rep = cls({}, {})
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            if obj["kind"] == "meta":
                rep.fingerprint, rep.seed, rep.pool = obj["fingerprint"], obj["seed"], obj["pool"]
            elif obj["kind"] == "metric":
                rep.metrics[obj["name"]] = obj["value"]
            else:
                rep.per_solution[obj["id"]] = obj["metrics"]
        return rep


def aggregate(per_solution: dict[str, dict[str, float]]) -> dict[str, float]:
    out = {}
    for name in METRIC_NAMES:
        key = "AP" if name == "MAP" else name
        vals = [m[key] for _, m in sorted(per_solution.items()) if key in m]
        if vals:
            out[name] = float(np.mean(vals))
    return out


def metrics_from_scores(examples: list[MatchExample], scores) -> dict[str, dict[str, float]]:
    pools = defaultdict(list)
    for e, s in zip(examples, scores):
        pools[e.solution_id].append((e.company_id, float(s), e.label))
    per = {}
    for sid in sorted(pools):
        ids, sc, lab = zip(*pools[sid])
        if not any(lab):
            warnings.warn(f"solution {sid} has no positive candidate; excluded from AP and recall", stacklevel=2)
        per[sid] = solution_metrics(ids, sc, lab)
    return per


def evaluate(model: MatchModel, examples: list[MatchExample], solutions: dict[str, SolutionRecord],
             companies: dict[str, CompanyRecord], pool: str = "labeled", fingerprint: str = "", seed: int = 0) -> MetricsReport:
    """Per-solution metrics over each solution's labeled candidates, averaged across solutions.

    With pool="all" every company is ranked for each solution and the
    solution's positives in ``examples`` are the relevant set.
    """
    if pool == "labeled":
        scores = model.predict(_pairs(examples, solutions, companies))
        per = metrics_from_scores(examples, scores)
    elif pool == "all":
        positives = defaultdict(set)
        for e in examples:
            if e.label:
                positives[e.solution_id].add(e.company_id)
        clist = [companies[k] for k in sorted(companies)]
        per = {}
        for sid in sorted({e.solution_id for e in examples}):
            ranking = rank_companies(model, solutions[sid], clist)
            ids, sc = zip(*ranking)
            per[sid] = solution_metrics(ids, sc, [int(i in positives[sid]) for i in ids])
    else:
        raise ValueError(f"unknown pool {pool!r}")
    return MetricsReport(aggregate(per), per, fingerprint, seed, pool)


def random_baseline(examples: list[MatchExample], seed: int = 0, draws: int = 50) -> dict[str, float]:
    """Metrics of uniformly random scores, averaged over several draws."""
    rng = np.random.default_rng(seed)
    runs = [aggregate(metrics_from_scores(examples, rng.random(len(examples)))) for _ in range(draws)]
    return {k: float(np.mean([r[k] for r in runs])) for k in runs[0]}
