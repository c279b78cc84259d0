"""Company scale encoder: look-up embeddings, AutoDis soft discretization, MLP fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import tensor as T
from .data import CompanyRecord, FieldSchema

PREFIX = "scale."


@dataclass(frozen=True)
class ScaleConfig:
    cardinalities: tuple[int, ...]
    n_numeric: int
    d_s: int = 32
    buckets: int = 8
    alpha: float = 1.0

    @classmethod
    def from_schema(cls, schema: FieldSchema, **kw) -> "ScaleConfig":
        return cls(schema.cardinalities, len(schema.numeric_fields), **kw)


def init_scale_params(store: T.ParamStore, cfg: ScaleConfig, rng: np.random.Generator) -> None:
    if cfg.buckets < 2:
        raise ValueError("AutoDis needs at least 2 buckets")
    d, H = cfg.d_s, cfg.buckets
    for i, f in enumerate(cfg.cardinalities):
        store.add(f"{PREFIX}E{i}", rng.normal(0, 0.1, (f, d)), "scale")
    for j in range(cfg.n_numeric):
        store.add(f"{PREFIX}w{j}", rng.normal(0, 1.0, H), "scale")
        store.add(f"{PREFIX}W{j}", rng.normal(0, 1.0 / np.sqrt(H), (H, H)), "scale")
        store.add(f"{PREFIX}ME{j}", rng.normal(0, 0.1, (H, d)), "scale")
    store.add(f"{PREFIX}alpha", np.array(cfg.alpha), "scale", trainable=False)
    store.add(f"{PREFIX}num_mean", np.zeros(cfg.n_numeric), "scale", trainable=False)
    store.add(f"{PREFIX}num_std", np.ones(cfg.n_numeric), "scale", trainable=False)
    fan_in = (len(cfg.cardinalities) + cfg.n_numeric) * d
    store.add(f"{PREFIX}mlp.w1", rng.normal(0, 1 / np.sqrt(fan_in), (fan_in, 2 * d)), "scale")
    store.add(f"{PREFIX}mlp.b1", np.zeros(2 * d), "scale")
    store.add(f"{PREFIX}mlp.w2", rng.normal(0, 1 / np.sqrt(2 * d), (2 * d, d)), "scale")
    store.add(f"{PREFIX}mlp.b2", np.zeros(d), "scale")
    store.add(f"{PREFIX}g1.w", rng.normal(0, 1 / np.sqrt(d), (d, 1)), "scale")
    store.add(f"{PREFIX}g1.b", np.zeros(1), "scale")


def set_standardization(store: T.ParamStore, mean, std) -> None:
    std = np.where(np.asarray(std) > 0, std, 1.0)
    with torch.no_grad():
        store[f"{PREFIX}num_mean"].copy_(torch.as_tensor(np.asarray(mean), dtype=store.dtype))
        store[f"{PREFIX}num_std"].copy_(torch.as_tensor(std, dtype=store.dtype))


def fit_standardization(companies: list[CompanyRecord], schema: FieldSchema) -> tuple[np.ndarray, np.ndarray]:
    vals = np.array([[c.numeric[n] for n in schema.numeric_fields] for c in companies], dtype=np.float64)
    return vals.mean(axis=0), vals.std(axis=0)


def encode_categorical(store: T.ParamStore, field: int, index) -> torch.Tensor:
    """e_i = E_i . one_hot(index): the index-th row of the field's table."""
    return T.embedding_gather(store[f"{PREFIX}E{field}"], index)


def autodis_encode(store: T.ParamStore, field: int, value: torch.Tensor, slope: float = T.LEAKY_SLOPE,
                   return_weights: bool = False):
    """Soft-discretize a (batch of) standardized scalar(s) into a d_s embedding.

    h = LeakyReLU(w v); v~ = W h + alpha h; weights = softmax(v~);
    output = sum_h weights_h * ME_h.
    """
    v = torch.as_tensor(value, dtype=store.dtype)
    w, W, ME = store[f"{PREFIX}w{field}"], store[f"{PREFIX}W{field}"], store[f"{PREFIX}ME{field}"]
    h = T.leaky_relu(v[..., None] * w, slope)
    projected = T.add(T.matmul(h, W.transpose(0, 1)), store[f"{PREFIX}alpha"] * h)
    weights = T.softmax(projected, axis=-1)
    out = T.matmul(weights, ME)
    return (out, weights) if return_weights else out


def fuse_scale(store: T.ParamStore, cat_embeds: list[torch.Tensor], num_embeds: list[torch.Tensor]) -> torch.Tensor:
    n_cat = len(store.names(f"{PREFIX}E"))
    n_num = len(store.names(f"{PREFIX}ME"))
    if len(cat_embeds) != n_cat or len(num_embeds) != n_num:
        raise ValueError(f"fuse_scale expects {n_cat} categorical and {n_num} numeric embeddings, "
                         f"got {len(cat_embeds)} and {len(num_embeds)}")
    x = T.concat(list(cat_embeds) + list(num_embeds), axis=-1)
    h = T.leaky_relu(T.affine(x, store[f"{PREFIX}mlp.w1"], store[f"{PREFIX}mlp.b1"]))
    return T.affine(h, store[f"{PREFIX}mlp.w2"], store[f"{PREFIX}mlp.b2"])


def scale_score(store: T.ParamStore, c_s: torch.Tensor) -> torch.Tensor:
    return T.logistic(T.affine(c_s, store[f"{PREFIX}g1.w"], store[f"{PREFIX}g1.b"]))[..., 0]


def encode_scale(store: T.ParamStore, categorical, numeric) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch path: categorical (B, G) ints, numeric (B, N) raw values -> (c_s, P_scale)."""
    cat = torch.as_tensor(categorical, dtype=torch.long)
    num = torch.as_tensor(numeric, dtype=store.dtype)
    num = (num - store[f"{PREFIX}num_mean"]) / store[f"{PREFIX}num_std"]
    cat_e = [encode_categorical(store, i, cat[:, i]) for i in range(cat.shape[1])]
    num_e = [autodis_encode(store, j, num[:, j]) for j in range(num.shape[1])]
    c_s = fuse_scale(store, cat_e, num_e)
    return c_s, scale_score(store, c_s)


def company_arrays(companies: list[CompanyRecord], schema: FieldSchema) -> tuple[np.ndarray, np.ndarray]:
    cat = np.array([[c.categorical[n] for n, _ in schema.categorical_fields] for c in companies], dtype=np.int64)
    num = np.array([[c.numeric[n] for n in schema.numeric_fields] for c in companies], dtype=np.float64)
    return cat.reshape(len(companies), -1), num.reshape(len(companies), -1)
