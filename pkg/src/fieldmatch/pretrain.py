"""In-batch contrastive pretraining of the token-level encoders."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import tensor as T
from .augment import Augmenter
from .data import CompanyRecord, SolutionRecord
from .model import MatchModel, encode_tokens
from .textseq import TokenSequence, to_arrays

log = logging.getLogger(__name__)


@dataclass
class ContrastiveBatch:
    views: list[TokenSequence]
    pair_index: list[int]
    strategies: list[tuple[str | None, str | None]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.views) % 2 or len(self.views) != len(self.pair_index):
            raise ValueError("a contrastive batch holds exactly two views per pair")


def build_contrastive_batch(pairs: list[tuple[SolutionRecord, CompanyRecord, int]], augmenter: Augmenter,
                            rng: np.random.Generator, base: list[TokenSequence] | None = None) -> ContrastiveBatch:
    """Two augmented views per pair; views 2i and 2i+1 come from pair i."""
    views, index, strategies = [], [], []
    for i, (s, c, label) in enumerate(pairs):
        v1, v2, st = augmenter.augment_pair(s, c, label, rng, None if base is None else base[i])
        views.extend((v1, v2))
        index.extend((i, i))
        strategies.append(st)
    return ContrastiveBatch(views, index, strategies)


def info_nce_loss(reps: torch.Tensor, pair_index, tau: float) -> torch.Tensor:
    """Mean over all 2M views of -log(phi(i, j) / (phi(i, j) + sum over other-pair views phi(i, k))).

    phi(a, b) = exp(cos(a, b) / tau). The partner view j is the only positive;
    the view itself is excluded from the denominator.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    pair = torch.as_tensor(np.asarray(pair_index))
    n = reps.shape[0]
    logits = T.cosine_similarity(reps, reps) / tau
    same = pair[:, None] == pair[None, :]
    eye = torch.eye(n, dtype=torch.bool)
    partner = same & ~eye
    if not bool((partner.sum(dim=1) == 1).all()):
        raise ValueError("every view needs exactly one partner view")
    denom = logits.masked_fill(eye, -math.inf)
    log_den = torch.logsumexp(denom, dim=1)
    pos = (logits * partner).sum(dim=1)
    return T.mean(log_den - pos)


@dataclass
class PretrainConfig:
    tau: float = 0.2
    r_t: float = 0.2
    r_f: float = 0.5
    epochs: int = 1
    batch_size: int = 32
    lr: float = 5e-5
    seed: int = 0
    strategies: tuple[str, ...] = ("token_mask", "field_mask", "company_replace")


def encoder_substore(store: T.ParamStore, enc: str) -> T.ParamStore:
    """A store sharing the encoder's tensors but holding its own optimizer state."""
    sub = T.ParamStore(dtype=store.dtype)
    for name in store.names(f"{enc}."):
        p = store.params[name]
        sub.params[name] = T.Param(p.value, p.group, p.trainable)
    return sub


def pretrain_encoder(model: MatchModel, enc: str, pairs: list[tuple[SolutionRecord, CompanyRecord, int]],
                     config: PretrainConfig, augmenter: Augmenter) -> list[tuple[int, float]]:
    """Contrastive pretraining of one token encoder in place; returns (step, loss) history."""
    rng = np.random.default_rng(config.seed)
    sub = encoder_substore(model.store, enc)
    base = [augmenter.assemble(s, c) for s, c, _ in pairs]
    history = []
    step = 0
    n_batches = math.ceil(len(pairs) / config.batch_size)
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        for b in range(n_batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            batch = build_contrastive_batch([pairs[i] for i in idx], augmenter, rng, [base[i] for i in idx])
            sub.zero_grad()
            cls, _ = encode_tokens(sub, enc, to_arrays(batch.views), model.cfg)
            loss = info_nce_loss(cls, batch.pair_index, config.tau)
            loss.backward()
            T.adam_step(sub, {"token_level": config.lr})
            step += 1
            history.append((step, float(loss.detach())))
        log.info("pretrain %s epoch %d loss %.4f", enc, epoch,
                 float(np.mean([l for _, l in history[-n_batches:]])) if n_batches else float("nan"))
    sub.zero_grad()
    return history


def epoch_means(history: list[tuple[int, float]], steps_per_epoch: int) -> list[float]:
    losses = [l for _, l in history]
    return [float(np.mean(losses[i : i + steps_per_epoch])) for i in range(0, len(losses), steps_per_epoch)]
