"""Hierarchical multi-field matcher.

Two token-level Transformer encoders read the description and attribute
sequences (field-aware embeddings added to word and position embeddings).
A field-level Transformer reads a pooling slot, the projected scale vector and
the trailing-[SEP] output of every text field. Four heads give P_scale,
P_desc, P_attr and P_field.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np
import torch

from . import scale as S
from . import tensor as T
from .data import CompanyRecord, FieldSchema, SolutionRecord
from .textseq import Vocab, assemble, field_layout, to_arrays

ABLATION_FLAGS = (
    "no_desc",
    "no_attr",
    "no_text_grouping",
    "no_field_embeddings",
    "no_scale",
    "no_field_level",
    "no_pretrain",
    "no_token_masking",
    "no_field_masking",
    "no_company_replacing",
)

GROUP_OF = {"desc": "description", "attr": "attribute", "text": "text"}


@dataclass(frozen=True)
class ModelConfig:
    # desk-scale defaults; the reference setting is BERT-base encoders, k=6, d_s=64
    d_e: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len_desc: int = 128
    max_len_attr: int = 128
    k_field_layers: int = 2
    d_s: int = 32
    buckets: int = 8
    alpha: float = 1.0
    use_desc: bool = True
    use_attr: bool = True
    text_grouping: bool = True
    field_embeddings: bool = True
    use_scale: bool = True
    field_level: bool = True

    def __post_init__(self):
        if self.d_e % self.n_heads:
            raise ValueError(f"d_e={self.d_e} must be divisible by n_heads={self.n_heads}")
        if not (self.use_desc or self.use_attr):
            raise ValueError("at least one text group must stay enabled")

    def with_flags(self, flags) -> "ModelConfig":
        unknown = set(flags) - set(ABLATION_FLAGS)
        if unknown:
            raise ValueError(f"unknown ablation flags {sorted(unknown)}")
        changes = {}
        if "no_desc" in flags:
            changes["use_desc"] = False
        if "no_attr" in flags:
            changes["use_attr"] = False
        if "no_text_grouping" in flags:
            changes["text_grouping"] = False
        if "no_field_embeddings" in flags:
            changes["field_embeddings"] = False
        if "no_scale" in flags:
            changes["use_scale"] = False
        if "no_field_level" in flags:
            changes["field_level"] = False
        return replace(self, **changes)

    @property
    def encoders(self) -> tuple[str, ...]:
        if not self.text_grouping:
            return ("text",)
        return tuple(g for g, on in (("desc", self.use_desc), ("attr", self.use_attr)) if on)

    def max_len(self, enc: str) -> int:
        return {"desc": self.max_len_desc, "attr": self.max_len_attr,
                "text": self.max_len_desc + self.max_len_attr}[enc]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MatchScores:
    P_scale: float | None
    P_desc: float | None
    P_attr: float | None
    P_field: float | None
    combined: float
    P_text: float | None = None


# ---------------------------------------------------------------- parameter init


def _glorot(rng, shape):
    return rng.normal(0, np.sqrt(2.0 / (shape[0] + shape[1])), shape)


def init_transformer_layers(store: T.ParamStore, prefix: str, n_layers: int, d: int, d_ff: int, group: str, rng) -> None:
    for i in range(n_layers):
        p = f"{prefix}layer{i}."
        for w in ("q", "k", "v", "o"):
            store.add(f"{p}w{w}", _glorot(rng, (d, d)), group)
            store.add(f"{p}b{w}", np.zeros(d), group)
        store.add(f"{p}ln1.g", np.ones(d), group)
        store.add(f"{p}ln1.b", np.zeros(d), group)
        store.add(f"{p}ff.w1", _glorot(rng, (d, d_ff)), group)
        store.add(f"{p}ff.b1", np.zeros(d_ff), group)
        store.add(f"{p}ff.w2", _glorot(rng, (d_ff, d)), group)
        store.add(f"{p}ff.b2", np.zeros(d), group)
        store.add(f"{p}ln2.g", np.ones(d), group)
        store.add(f"{p}ln2.b", np.zeros(d), group)


def transformer_layers(store: T.ParamStore, prefix: str, x: torch.Tensor, n_layers: int, n_heads: int,
                       mask: torch.Tensor | None = None) -> torch.Tensor:
    """Post-norm encoder layers with a ReLU feed-forward block."""
    for i in range(n_layers):
        p = f"{prefix}layer{i}."
        attn = T.multi_head_attention(
            x, store[f"{p}wq"], store[f"{p}bq"], store[f"{p}wk"], store[f"{p}bk"],
            store[f"{p}wv"], store[f"{p}bv"], store[f"{p}wo"], store[f"{p}bo"], n_heads, mask,
        )
        x = T.layer_norm(T.add(x, attn), store[f"{p}ln1.g"], store[f"{p}ln1.b"])
        ff = T.affine(T.relu(T.affine(x, store[f"{p}ff.w1"], store[f"{p}ff.b1"])), store[f"{p}ff.w2"], store[f"{p}ff.b2"])
        x = T.layer_norm(T.add(x, ff), store[f"{p}ln2.g"], store[f"{p}ln2.b"])
    return x


def n_group_fields(schema: FieldSchema, enc: str) -> int:
    layout, _ = field_layout(schema, GROUP_OF[enc])
    return len(layout)


def init_token_encoder(store: T.ParamStore, enc: str, cfg: ModelConfig, schema: FieldSchema, vocab_size: int, rng) -> None:
    p, d = f"{enc}.", cfg.d_e
    store.add(f"{p}word", rng.normal(0, 0.1, (vocab_size, d)), "token_level")
    store.add(f"{p}pos", rng.normal(0, 0.1, (cfg.max_len(enc), d)), "token_level")
    store.add(f"{p}fe", rng.normal(0, 0.1, (n_group_fields(schema, enc) + 1, d)), "token_level")
    store.add(f"{p}ln_emb.g", np.ones(d), "token_level")
    store.add(f"{p}ln_emb.b", np.zeros(d), "token_level")
    init_transformer_layers(store, p, cfg.n_layers, d, cfg.d_ff, "token_level", rng)
    store.add(f"{p}head.w", rng.normal(0, 1 / np.sqrt(d), (d, 1)), "token_level")
    store.add(f"{p}head.b", np.zeros(1), "token_level")


def n_slots(cfg: ModelConfig, schema: FieldSchema) -> int:
    n = 1 + int(cfg.use_scale)
    if cfg.use_desc:
        n += n_group_fields(schema, "desc")
    if cfg.use_attr:
        n += n_group_fields(schema, "attr")
    return n


def init_field_encoder(store: T.ParamStore, cfg: ModelConfig, schema: FieldSchema, rng) -> None:
    d = cfg.d_e
    store.add("field.p", rng.normal(0, 1.0, d), "field_level")
    if cfg.use_scale:
        store.add("field.l.w", _glorot(rng, (cfg.d_s, d)), "field_level")
        store.add("field.l.b", np.zeros(d), "field_level")
    store.add("field.slot_pos", rng.normal(0, 0.1, (n_slots(cfg, schema), d)), "field_level")
    init_transformer_layers(store, "field.", cfg.k_field_layers, d, cfg.d_ff, "field_level", rng)
    store.add("field.g4.w", rng.normal(0, 1 / np.sqrt(d), (d, 1)), "field_level")
    store.add("field.g4.b", np.zeros(1), "field_level")


# ---------------------------------------------------------------- forward pieces


def encode_tokens(store: T.ParamStore, enc: str, arrays: dict, cfg: ModelConfig,
                  field_embeddings: bool | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """Run one token-level encoder; returns ([CLS] output (B, d), trailing-[SEP] outputs (B, F, d))."""
    p = f"{enc}."
    tokens = torch.as_tensor(arrays["tokens"])
    fields = torch.as_tensor(arrays["fields"])
    mask = torch.as_tensor(arrays["mask"])
    seps = torch.as_tensor(arrays["seps"])
    B, L = tokens.shape
    fe_table = store[f"{p}fe"]
    n_real = fe_table.shape[0]
    if int(fields.max()) > n_real or int(fields.min()) < 0:
        raise IndexError(f"{enc}: field id outside the field-aware embedding range [0, {n_real})")
    use_fe = cfg.field_embeddings if field_embeddings is None else field_embeddings
    x = T.embedding_gather(store[f"{p}word"], tokens) + store[f"{p}pos"][:L]
    if use_fe:
        # the padding id (== n_real) maps to a zero row
        padded = T.concat([fe_table, torch.zeros(1, fe_table.shape[1], dtype=fe_table.dtype)], axis=0)
        x = T.add(x, T.embedding_gather(padded, fields))
    x = T.layer_norm(x, store[f"{p}ln_emb.g"], store[f"{p}ln_emb.b"])
    x = transformer_layers(store, p, x, cfg.n_layers, cfg.n_heads, mask)
    cls = x[:, 0]
    sep_out = x[torch.arange(B)[:, None], seps]
    return cls, sep_out


def token_score(store: T.ParamStore, enc: str, cls: torch.Tensor) -> torch.Tensor:
    return T.logistic(T.affine(cls, store[f"{enc}.head.w"], store[f"{enc}.head.b"]))[..., 0]


def field_level(store: T.ParamStore, cfg: ModelConfig, c_s: torch.Tensor | None,
                sep_groups: list[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
    """Y = Trm([p; l(c_s); s^d; c^d; s^a; c^a])[slot 0]; returns (Y, P_field)."""
    parts = []
    B = sep_groups[0].shape[0]
    p = store["field.p"]
    parts.append(p.expand(B, 1, -1))
    if cfg.use_scale:
        if c_s is None:
            raise ValueError("field_level: scale slot enabled but no scale vector given")
        parts.append(T.affine(c_s, store["field.l.w"], store["field.l.b"])[:, None, :])
    parts.extend(sep_groups)
    x = T.concat(parts, axis=1)
    pos = store["field.slot_pos"]
    if x.shape[1] != pos.shape[0]:
        raise ValueError(f"field_level: {x.shape[1]} slots given, {pos.shape[0]} expected")
    x = T.add(x, pos)
    x = transformer_layers(store, "field.", x, cfg.k_field_layers, cfg.n_heads)
    Y = x[:, 0]
    P = T.logistic(T.affine(Y, store["field.g4.w"], store["field.g4.b"]))[..., 0]
    return Y, P


def joint_loss(scores: dict[str, torch.Tensor], labels) -> torch.Tensor:
    """Mean over examples of the summed binary cross-entropy of every head."""
    y = torch.as_tensor(labels)
    if not bool(((y == 0) | (y == 1)).all()):
        raise ValueError("labels must be 0 or 1")
    heads = list(scores.values())
    y = y.to(heads[0].dtype)
    total = 0
    for P in heads:
        total = total + T.binary_cross_entropy(P, y)
    return T.mean(total)


# ---------------------------------------------------------------- the model


class MatchModel:
    def __init__(self, cfg: ModelConfig, schema: FieldSchema, vocab: Vocab, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        self.cfg = cfg
        self.schema = schema
        self.vocab = vocab
        self.store = T.ParamStore(dtype=dtype)
        rng = np.random.default_rng(seed)
        for enc in cfg.encoders:
            init_token_encoder(self.store, enc, cfg, schema, len(vocab), rng)
        if cfg.use_scale:
            S.init_scale_params(self.store, S.ScaleConfig(schema.cardinalities, len(schema.numeric_fields),
                                                         cfg.d_s, cfg.buckets, cfg.alpha), rng)
        if cfg.field_level:
            init_field_encoder(self.store, cfg, schema, rng)

    # -- inputs

    def encode_pairs(self, pairs: list[tuple[SolutionRecord, CompanyRecord]]) -> dict:
        """Assemble and stack every input the forward pass needs for these pairs."""
        out = {}
        for enc in self.cfg.encoders:
            seqs = [assemble(s, c, self.schema, self.vocab, self.cfg.max_len(enc), GROUP_OF[enc]) for s, c in pairs]
            out[enc] = to_arrays(seqs)
        cat, num = S.company_arrays([c for _, c in pairs], self.schema)
        out["categorical"], out["numeric"] = cat, num
        return out

    # -- forward

    def forward(self, inputs: dict, store: T.ParamStore | None = None) -> dict[str, torch.Tensor]:
        store = self.store if store is None else store
        cfg = self.cfg
        scores: dict[str, torch.Tensor] = {}
        c_s = None
        if cfg.use_scale:
            c_s, scores["scale"] = S.encode_scale(store, inputs["categorical"], inputs["numeric"])
        seps = {}
        for enc in cfg.encoders:
            cls, sep_out = encode_tokens(store, enc, inputs[enc], cfg)
            scores[enc] = token_score(store, enc, cls)
            seps[enc] = sep_out
        if cfg.field_level:
            scores["field"] = field_level(store, cfg, c_s, self._slot_groups(seps))[1]
        return scores

    def _slot_groups(self, seps: dict[str, torch.Tensor]) -> list[torch.Tensor]:
        if "text" in seps:
            # text order is s^d s^a c^d c^a; slots want s^d c^d s^a c^a
            sd, sa = len(self.schema.desc_fields_solution), len(self.schema.attr_fields_solution)
            cd, ca = len(self.schema.desc_fields_company), len(self.schema.attr_fields_company)
            order = (list(range(sd)) + list(range(sd + sa, sd + sa + cd))
                     + list(range(sd, sd + sa)) + list(range(sd + sa + cd, sd + sa + cd + ca)))
            return [seps["text"][:, order]]
        return [seps[e] for e in ("desc", "attr") if e in seps]

    @staticmethod
    def combine(scores: dict[str, torch.Tensor]) -> torch.Tensor:
        return torch.stack(list(scores.values()), dim=0).mean(dim=0)

    def predict(self, pairs, batch_size: int = 256) -> np.ndarray:
        """Combined score for each (solution, company) pair."""
        out = []
        with torch.no_grad():
            for i in range(0, len(pairs), batch_size):
                scores = self.forward(self.encode_pairs(pairs[i : i + batch_size]))
                out.append(self.combine(scores).double().numpy())
        return np.concatenate(out) if out else np.zeros(0)

    def match(self, s: SolutionRecord, c: CompanyRecord) -> MatchScores:
        with torch.no_grad():
            scores = {k: float(v[0]) for k, v in self.forward(self.encode_pairs([(s, c)])).items()}
        combined = float(np.mean(list(scores.values())))
        return MatchScores(scores.get("scale"), scores.get("desc"), scores.get("attr"), scores.get("field"),
                           combined, scores.get("text"))

    def zero_heads(self) -> None:
        with torch.no_grad():
            for name in self.store:
                if any(name.startswith(p) for p in ("scale.g1.", "desc.head.", "attr.head.", "text.head.", "field.g4.")):
                    self.store[name].zero_()
