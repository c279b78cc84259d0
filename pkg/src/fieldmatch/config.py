"""Flat key=value run configuration shared by every pipeline stage."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # synthetic corpus
    n_solutions: int = 20
    n_companies: int = 2000
    n_industries: int = 5
    vocab_seed_words: int = 400
    positives_per_solution: int = 80
    text_signal: float = 0.9
    scale_signal: float = 0.6
    missing_field_rate: float = 0.05
    missing_token_rate: float = 0.02
    # examples and splits
    negatives_per_positive: int = 4
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    min_count: int = 1
    # model
    # desk scale; the reference setting is BERT-base encoders, k=6, d_s=64
    d_e: int = 32
    n_layers: int = 1
    n_heads: int = 2
    d_ff: int = 64
    max_len_desc: int = 56
    max_len_attr: int = 40
    k_field_layers: int = 1
    d_s: int = 16
    buckets: int = 8
    alpha: float = 1.0
    # contrastive pretraining
    use_pretrained: bool = True
    pretrain_epochs: int = 1
    pretrain_batch: int = 32
    lr_pretrain: float = 1e-3
    tau_d: float = 0.2
    tau_a: float = 0.05
    r_t: float = 0.2
    r_f: float = 0.5
    # supervised training
    batch_size: int = 32
    # from-scratch encoders this small need larger steps than fine-tuning BERT (3e-5 / 5e-4 / 5e-5)
    epochs: int = 6
    lr_token: float = 1e-3
    lr_scale: float = 3e-3
    lr_field: float = 1e-3

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (p.strip() for p in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            values[key] = value
        return cls().override(values, source)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(encoding="utf-8"), str(path))

    def override(self, values: dict, source: str = "<override>") -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, value in values.items():
            if key not in types:
                raise ConfigError(f"{source}: unknown config key {key!r}")
            parsed[key] = _parse(key, value, types[key], source)
        return replace(self, **parsed)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(getattr(self, k))}\n" for k in self.keys())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


def _parse(key: str, value, typ: str, source: str):
    if not isinstance(value, str):
        return value
    try:
        if typ == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "int":
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"{source}: bad {typ} value for {key!r}: {value!r}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)
