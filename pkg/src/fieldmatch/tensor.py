"""Differentiable primitives, parameter store, Adam and finite-difference checking.

Reverse-mode gradients come from torch autograd; the primitives below add
shape checks and finiteness checks on top so that every encoder in the
package is built from the same small, verified vocabulary of operations.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch

LEAKY_SLOPE = 0.01
MASK_FILL = -1e9
PARAM_GROUPS = ("token_level", "scale", "field_level")

torch.use_deterministic_algorithms(True)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def _finite(name: str, out: torch.Tensor) -> torch.Tensor:
    # any nan/inf entry propagates into the sum
    if not math.isfinite(float(out.detach().sum())):
        raise NonFiniteError(f"{name}: non-finite value in output")
    return out


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------- primitives


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _need(a.shape[-1] == b.shape[-2] if b.dim() > 1 else a.shape[-1] == b.shape[0],
          f"matmul: a{tuple(a.shape)} and b{tuple(b.shape)} are not aligned")
    return _finite("matmul", a @ b)


def affine(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """x @ weight + bias, weight shaped (in, out)."""
    _need(x.shape[-1] == weight.shape[0], f"affine: input{tuple(x.shape)} vs weight{tuple(weight.shape)}")
    out = x @ weight
    if bias is not None:
        _need(bias.shape == weight.shape[1:], f"affine: bias{tuple(bias.shape)} vs weight{tuple(weight.shape)}")
        out = out + bias
    return _finite("affine", out)


def embedding_gather(table: torch.Tensor, index) -> torch.Tensor:
    index = torch.as_tensor(index, dtype=torch.long)
    if index.numel() and (int(index.min()) < 0 or int(index.max()) >= table.shape[0]):
        raise IndexError(f"embedding_gather: index outside [0, {table.shape[0]})")
    return table[index]


def softmax(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    shifted = x - x.max(dim=axis, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return _finite("softmax", e / e.sum(dim=axis, keepdim=True))


def leaky_relu(x: torch.Tensor, slope: float = LEAKY_SLOPE) -> torch.Tensor:
    return torch.where(x > 0, x, slope * x)


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.clamp_min(x, 0.0)


def layer_norm(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    _need(gamma.shape == x.shape[-1:] and beta.shape == x.shape[-1:], "layer_norm: gamma/beta must match last axis")
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return _finite("layer_norm", (x - mu) / torch.sqrt(var + eps) * gamma + beta)


def multi_head_attention(
    x: torch.Tensor,
    wq, bq, wk, bk, wv, bv, wo, bo,
    n_heads: int,
    mask: torch.Tensor | None = None,
    return_weights: bool = False,
):
    """Self-attention over x (B, L, d); mask (B, L) is True for real keys."""
    B, L, d = x.shape
    _need(d % n_heads == 0, f"multi_head_attention: d={d} not divisible by heads={n_heads}")
    dh = d // n_heads

    def split(t):
        return t.reshape(B, L, n_heads, dh).transpose(1, 2)

    q, k, v = split(affine(x, wq, bq)), split(affine(x, wk, bk)), split(affine(x, wv, bv))
    scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
    if mask is not None:
        _need(tuple(mask.shape) == (B, L), f"multi_head_attention: mask{tuple(mask.shape)} vs input{(B, L)}")
        scores = scores.masked_fill(~mask[:, None, None, :], MASK_FILL)
    weights = softmax(scores, axis=-1)
    ctx = (weights @ v).transpose(1, 2).reshape(B, L, d)
    out = affine(ctx, wo, bo)
    return (out, weights) if return_weights else out


def logistic(x: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(x)


def cosine_similarity(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Pairwise cosine between rows: (n, d) x (m, d) -> (n, m)."""
    _need(a.shape[-1] == b.shape[-1], f"cosine_similarity: a{tuple(a.shape)} vs b{tuple(b.shape)}")
    an = a / torch.sqrt((a * a).sum(-1, keepdim=True) + eps)
    bn = b / torch.sqrt((b * b).sum(-1, keepdim=True) + eps)
    return _finite("cosine_similarity", an @ bn.transpose(-1, -2))


def binary_cross_entropy(p: torch.Tensor, y: torch.Tensor, clamp: float = 1e-7) -> torch.Tensor:
    """Elementwise -[y log p + (1-y) log(1-p)] with p clamped away from 0 and 1."""
    _need(p.shape == y.shape, f"binary_cross_entropy: p{tuple(p.shape)} vs y{tuple(y.shape)}")
    p = p.clamp(clamp, 1.0 - clamp)
    return _finite("binary_cross_entropy", -(y * torch.log(p) + (1 - y) * torch.log(1 - p)))


def add(*xs: torch.Tensor) -> torch.Tensor:
    out = xs[0]
    for x in xs[1:]:
        out = out + x
    return _finite("add", out)


def concat(xs: Iterable[torch.Tensor], axis: int = -1) -> torch.Tensor:
    return torch.cat(list(xs), dim=axis)


def mean(x: torch.Tensor, axis=None) -> torch.Tensor:
    return x.mean() if axis is None else x.mean(dim=axis)


# ---------------------------------------------------------------- parameters


@dataclass
class Param:
    value: torch.Tensor
    group: str
    trainable: bool = True
    m: torch.Tensor | None = None
    v: torch.Tensor | None = None

    @property
    def grad(self) -> torch.Tensor:
        g = self.value.grad
        return torch.zeros_like(self.value) if g is None else g


@dataclass
class ParamStore:
    params: dict[str, Param] = field(default_factory=dict)
    step: int = 0
    dtype: torch.dtype = torch.float32

    def add(self, name: str, value, group: str, trainable: bool = True) -> torch.Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        if group not in PARAM_GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        t = torch.as_tensor(np.asarray(value), dtype=self.dtype).clone()
        t.requires_grad_(trainable)
        self.params[name] = Param(t, group, trainable)
        return t

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.params[name].value

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def n_values(self) -> int:
        return sum(p.value.numel() for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.value.grad = None

    def to(self, dtype: torch.dtype) -> "ParamStore":
        """Deep copy with values cast to dtype; optimizer state is dropped."""
        out = ParamStore(dtype=dtype)
        for name, p in self.params.items():
            out.add(name, p.value.detach().to(dtype).numpy(), p.group, p.trainable)
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore(step=self.step, dtype=self.dtype)
        for name, p in self.params.items():
            t = p.value.detach().clone().requires_grad_(p.trainable)
            out.params[name] = Param(
                t, p.group, p.trainable,
                None if p.m is None else p.m.clone(),
                None if p.v is None else p.v.clone(),
            )
        return out

    def load_values(self, other: "ParamStore", prefix: str = "") -> None:
        """Copy values of matching names (optionally only under prefix) from other."""
        with torch.no_grad():
            for name in other.names(prefix):
                if name in self.params:
                    self.params[name].value.copy_(other[name].detach().to(self.dtype))

    def numpy(self) -> dict[str, np.ndarray]:
        return {n: p.value.detach().numpy().copy() for n, p in self.params.items()}

    def equal(self, other: "ParamStore") -> bool:
        return list(self.params) == list(other.params) and all(
            torch.equal(self[n].detach(), other[n].detach()) for n in self.params
        )


def adam_step(store: ParamStore, group_learning_rates: dict[str, float],
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; moments live on each Param."""
    for p in store.params.values():
        if p.trainable and p.group not in group_learning_rates:
            raise KeyError(f"no learning rate for parameter group {p.group!r}")
    store.step += 1
    t = store.step
    with torch.no_grad():
        for p in store.params.values():
            if not p.trainable:
                continue
            g = p.grad
            if p.m is None:
                p.m = torch.zeros_like(p.value)
                p.v = torch.zeros_like(p.value)
            p.m.mul_(beta1).add_(g, alpha=1 - beta1)
            p.v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
            m_hat = p.m / (1 - beta1**t)
            v_hat = p.v / (1 - beta2**t)
            p.value.sub_(group_learning_rates[p.group] * m_hat / (torch.sqrt(v_hat) + eps))


# ---------------------------------------------------------------- gradient check


def grad_check(
    closure: Callable[[ParamStore], torch.Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    names: Iterable[str] | None = None,
    floor: float = 1e-5,
) -> float:
    """Max relative error between autograd and central differences.

    The store should hold float64 values. With ``max_entries`` only that many
    randomly chosen entries per parameter are probed. Entries whose gradients
    are both below ``floor`` (e.g. a key bias, which softmax ignores) are
    compared on absolute error scaled by ``floor``, so round-off in the
    difference quotient does not read as a 100% error.
    """
    rng = np.random.default_rng(seed)
    store.zero_grad()
    loss = closure(store)
    loss.backward()
    analytic = {n: store.params[n].grad.detach().clone() for n in store.params}
    worst = 0.0
    with torch.no_grad():
        for name in names if names is not None else list(store.params):
            p = store.params[name]
            if not p.trainable:
                continue
            flat = p.value.view(-1)
            idx = np.arange(flat.numel())
            if max_entries is not None and flat.numel() > max_entries:
                idx = np.sort(rng.choice(flat.numel(), size=max_entries, replace=False))
            a_flat = analytic[name].view(-1)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = closure(store).item()
                flat[i] = orig - eps
                down = closure(store).item()
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                a = a_flat[i].item()
                rel = abs(a - fd) / max(abs(a), abs(fd), floor)
                worst = max(worst, rel)
    store.zero_grad()
    return worst


def grad_check_inputs(fn: Callable[..., torch.Tensor], inputs: list[torch.Tensor], eps: float = 1e-5,
                      floor: float = 1e-5) -> float:
    """Same relative-error measure, taken over the entries of free input tensors."""
    store = ParamStore(dtype=torch.float64)
    for i, x in enumerate(inputs):
        store.add(f"x{i}", x.detach().numpy(), "token_level")
    return grad_check(lambda st: fn(*[st[f"x{i}"] for i in range(len(inputs))]), store, eps, floor=floor)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"FMCKPT"
VERSION = 1


def save_checkpoint(store: ParamStore, path, meta: dict | None = None) -> None:
    """Binary checkpoint: header, JSON metadata, then one record per parameter.

    Values are written as little-endian float32, so float32 stores round-trip
    bit for bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(store.params)))
        for name, p in store.params.items():
            nb = name.encode("utf-8")
            gb = p.group.encode("utf-8")
            arr = p.value.detach().numpy().astype("<f4")
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<B", len(gb)) + gb)
            fh.write(struct.pack("<BB", int(p.trainable), arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    version, mlen = struct.unpack_from("<II", data, off)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    meta = json.loads(data[off : off + mlen].decode("utf-8"))
    off += mlen
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    store = ParamStore()
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nl].decode("utf-8")
        off += nl
        (gl,) = struct.unpack_from("<B", data, off)
        off += 1
        group = data[off : off + gl].decode("utf-8")
        off += gl
        trainable, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        store.add(name, arr.astype(np.float32), group, bool(trainable))
    return store, meta
