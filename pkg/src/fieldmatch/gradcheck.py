"""Finite-difference verification of every differentiable piece, in float64."""

from __future__ import annotations

import numpy as np
import torch

from . import scale as S
from . import tensor as T
from .augment import token_mask
from .model import GROUP_OF, MatchModel, ModelConfig, encode_tokens, field_level, joint_loss
from .pretrain import info_nce_loss
from .synth import SynthConfig, generate_corpus
from .textseq import assemble, build_vocab, record_texts, to_arrays

TOLERANCE = 1e-4
F64 = torch.float64


def _weighted(out: torch.Tensor, rng) -> torch.Tensor:
    # a fixed random projection; plain sums hide errors (softmax rows sum to 1)
    r = torch.as_tensor(rng.normal(size=tuple(out.shape)), dtype=F64)
    return (out * r).sum()


def _away_from_zero(rng, shape, low=0.1):
    x = rng.uniform(low, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return torch.as_tensor(x, dtype=F64)


def primitive_checks(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)

    def t(*shape):
        return torch.as_tensor(rng.normal(size=shape), dtype=F64)

    def proj(fn, inputs):
        r = np.random.default_rng(rng.integers(1 << 31))
        out_shape = fn(*[x.detach() for x in inputs]).shape
        w = torch.as_tensor(r.normal(size=tuple(out_shape)), dtype=F64)
        return lambda *xs: (fn(*xs) * w).sum()

    out = {}
    cases = {
        "matmul": ([t(3, 4), t(4, 2)], T.matmul),
        "affine": ([t(2, 3, 4), t(4, 5), t(5)], T.affine),
        "softmax": ([t(3, 5) * 3], lambda x: T.softmax(x)),
        "leaky_relu": ([_away_from_zero(rng, (4, 5))], lambda x: T.leaky_relu(x)),
        "relu": ([_away_from_zero(rng, (4, 5))], T.relu),
        "layer_norm": ([t(3, 6), 1 + 0.1 * t(6), t(6)], T.layer_norm),
        "logistic": ([t(7)], T.logistic),
        "cosine_similarity": ([t(4, 5), t(3, 5)], T.cosine_similarity),
        "binary_cross_entropy": ([torch.as_tensor(rng.uniform(0.05, 0.95, 6), dtype=F64)],
                                 lambda p: T.binary_cross_entropy(p, torch.tensor([1, 0, 1, 1, 0, 0], dtype=F64))),
        "add": ([t(3, 4), t(3, 4), t(4)], T.add),
        "concat": ([t(2, 3), t(2, 2)], lambda a, b: T.concat([a, b], axis=-1)),
        "mean": ([t(3, 4)], lambda x: T.mean(x, axis=0)),
        "embedding_gather": ([t(5, 3)], lambda table: T.embedding_gather(table, [[0, 3, 3], [4, 1, 0]])),
    }
    mask = torch.tensor([[True, True, True, False], [True, True, False, False]])
    d = 4
    cases["multi_head_attention"] = (
        [t(2, 4, d), t(d, d), t(d), t(d, d), t(d), t(d, d), t(d), t(d, d), t(d)],
        lambda x, *w: T.multi_head_attention(x, *w, n_heads=2, mask=mask),
    )
    for name, (inputs, fn) in cases.items():
        out[name] = T.grad_check_inputs(proj(fn, inputs), inputs)
    return out


def tiny_setup(seed: int = 0, flags=()):
    corpus = generate_corpus(SynthConfig(n_solutions=2, n_companies=12, n_industries=2, vocab_seed_words=40,
                                         positives_per_solution=2, seed=seed))
    vocab = build_vocab(record_texts(corpus.solutions + corpus.companies))
    cfg = ModelConfig(d_e=8, n_layers=1, n_heads=2, d_ff=8, max_len_desc=32, max_len_attr=24,
                      k_field_layers=1, d_s=4, buckets=3).with_flags(flags)
    model = MatchModel(cfg, corpus.schema, vocab, seed=seed, dtype=F64)
    pairs = [(corpus.solutions[i % 2], corpus.companies[j]) for i, j in enumerate((0, 3, 5, 8))]
    labels = np.array([1, 0, 0, 1])
    mean, std = S.fit_standardization(corpus.companies, corpus.schema)
    if cfg.use_scale:
        S.set_standardization(model.store, mean, std)
    return model, pairs, labels


def component_checks(seed: int = 0, max_entries: int = 4) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    out = {}
    model, pairs, labels = tiny_setup(seed)
    store = model.store
    inputs = model.encode_pairs(pairs)

    cat, num = inputs["categorical"], inputs["numeric"]
    v = torch.as_tensor(rng.normal(size=5), dtype=F64)
    out["autodis"] = T.grad_check(lambda st: _weighted(S.autodis_encode(st, 0, v), np.random.default_rng(1)),
                                  store, names=store.names("scale."))
    out["scale_encoder"] = T.grad_check(lambda st: S.encode_scale(st, cat, num)[1].sum(), store,
                                        names=store.names("scale."))
    for enc in model.cfg.encoders:
        out[f"token_encoder.{enc}"] = T.grad_check(
            lambda st, enc=enc: _weighted(encode_tokens(st, enc, inputs[enc], model.cfg)[1], np.random.default_rng(2)),
            store, names=store.names(f"{enc}."), max_entries=max_entries, seed=seed)

    def field_closure(st):
        c_s, _ = S.encode_scale(st, cat, num)
        seps = [encode_tokens(st, enc, inputs[enc], model.cfg)[1] for enc in model.cfg.encoders]
        return field_level(st, model.cfg, c_s, seps)[1].sum()

    out["field_level"] = T.grad_check(field_closure, store, names=store.names("field."),
                                      max_entries=max_entries, seed=seed)
    out["joint_loss"] = T.grad_check(lambda st: joint_loss(model.forward(inputs, st), labels), store,
                                     max_entries=max_entries, seed=seed)
    # one concatenated text sequence through a single encoder
    merged, mpairs, mlabels = tiny_setup(seed, ("no_text_grouping",))
    minputs = merged.encode_pairs(mpairs)
    out["joint_loss.no_text_grouping"] = T.grad_check(lambda st: joint_loss(merged.forward(minputs, st), mlabels),
                                                      merged.store, max_entries=max_entries, seed=seed)
    return out


def info_nce_checks(seed: int = 0, max_entries: int = 4) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    out = {}
    reps = torch.as_tensor(rng.normal(size=(6, 5)), dtype=F64)
    for tau in (1.0, 0.2, 0.05):
        out[f"info_nce.tau={tau}"] = T.grad_check_inputs(lambda r, tau=tau: info_nce_loss(r, [0, 0, 1, 1, 2, 2], tau), [reps])

    model, pairs, _ = tiny_setup(seed)
    views, index = [], []
    for i, (s, c) in enumerate(pairs[:3]):
        base = assemble(s, c, model.schema, model.vocab, model.cfg.max_len("desc"), GROUP_OF["desc"])
        views += [token_mask(base, 0.2, rng), token_mask(base, 0.2, rng)]
        index += [i, i]
    arrays = to_arrays(views)
    out["info_nce.encoder"] = T.grad_check(
        lambda st: info_nce_loss(encode_tokens(st, "desc", arrays, model.cfg)[0], index, 0.2),
        model.store, names=model.store.names("desc."), max_entries=max_entries, seed=seed)
    return out


def run_suite(seed: int = 0) -> dict[str, float]:
    """Max relative error per component."""
    results = {}
    results.update(primitive_checks(seed))
    results.update(component_checks(seed))
    results.update(info_nce_checks(seed))
    return results
