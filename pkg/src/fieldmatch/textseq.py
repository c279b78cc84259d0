"""Vocabulary, whitespace tokenization and the two token-level input sequences.

Layout of an assembled sequence (description shown, attribute identical with
``tag [EOS]`` runs as field content)::

    [CLS] s_1 [SEP] ... s_F [SEP] [SEP] c_1 [SEP] ... c_G [SEP] [SEP]

Field ids: 0 for [CLS], 1..F+G for the fields in order, and F+G+1 for [PAD].
Each block-final extra [SEP] carries the id of the field before it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import CompanyRecord, FieldSchema, SolutionRecord

PAD, CLS, SEP, EOS, TOKEN_MASK, FIELD_MASK, UNK = range(7)
RESERVED = ("[PAD]", "[CLS]", "[SEP]", "[EOS]", "[token_mask]", "[field_mask]", "[UNK]")
STRUCTURAL = frozenset({PAD, CLS, SEP, EOS})
# tokens never counted as maskable content
NON_CONTENT = frozenset({PAD, CLS, SEP, EOS, TOKEN_MASK, FIELD_MASK})

GROUPS = ("description", "attribute", "text")


class SequenceError(ValueError):
    pass


class Vocab:
    def __init__(self, tokens: Iterable[str]):
        self.itos = list(tokens)
        if tuple(self.itos[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocab must start with the reserved tokens in fixed order")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocab")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.itos[i] for i in ids)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocab:
    counts = Counter()
    for doc in corpus:
        counts.update(tokenize(doc))
    kept = sorted((t for t, n in counts.items() if n >= min_count and t not in RESERVED), key=lambda t: (-counts[t], t))
    return Vocab(RESERVED + tuple(kept))


def record_texts(records) -> Iterable[str]:
    for rec in records:
        yield from rec.desc.values()
        for tags in rec.attr.values():
            yield from tags


@dataclass
class TokenSequence:
    token_ids: list[int]
    field_ids: list[int]
    group: str
    boundary: int
    sep_positions: dict[int, int]
    n_solution_fields: int
    n_fields: int
    length: int = -1  # real (unpadded) length; -1 means no padding

    def __post_init__(self):
        if self.length < 0:
            self.length = len(self.token_ids)

    def __len__(self):
        return len(self.token_ids)

    @property
    def pad_field(self) -> int:
        return self.n_fields + 1

    @property
    def attention_mask(self) -> list[bool]:
        return [i < self.length for i in range(len(self.token_ids))]

    def content_positions(self) -> list[int]:
        return [i for i in range(self.length) if self.token_ids[i] not in NON_CONTENT]

    def field_contents(self) -> list[list[int]]:
        """Tokens of each field between its opening and its trailing [SEP]."""
        out = []
        start = 1
        for f in range(1, self.n_fields + 1):
            end = self.sep_positions[f]
            out.append(self.token_ids[start:end])
            start = end + 1
            if f == self.n_solution_fields:
                start += 1  # block-final [SEP]
        return out


def render(contents: list[list[int]], n_solution_fields: int, group: str) -> TokenSequence:
    """Frame per-field token lists into the [CLS] ... [SEP] [SEP] grammar."""
    tokens, fields, seps = [CLS], [0], {}
    boundary = None
    n_fields = len(contents)
    for f, content in enumerate(contents, start=1):
        if not content:
            content = [FIELD_MASK]
        tokens.extend(content)
        fields.extend([f] * len(content))
        seps[f] = len(tokens)
        tokens.append(SEP)
        fields.append(f)
        if f == n_solution_fields or f == n_fields:
            tokens.append(SEP)
            fields.append(f)
            if f == n_solution_fields:
                boundary = len(tokens)
    return TokenSequence(tokens, fields, group, boundary, seps, n_solution_fields, n_fields)


def _desc_content(text: str | None, vocab: Vocab) -> list[int]:
    if text is None:
        return [FIELD_MASK]
    ids = vocab.encode(text)
    return ids or [FIELD_MASK]


def _attr_content(tags: list[str] | None, vocab: Vocab) -> list[int]:
    out = []
    for tag in tags or ():
        ids = vocab.encode(tag)
        if ids:
            out.extend(ids)
            out.append(EOS)
    return out or [FIELD_MASK]


def field_layout(schema: FieldSchema, group: str) -> tuple[list[tuple[str, str]], int]:
    """[(kind, name)] in sequence order and the number of solution fields."""
    if group == "description":
        sol = [("desc", n) for n in schema.desc_fields_solution]
        com = [("desc", n) for n in schema.desc_fields_company]
    elif group == "attribute":
        sol = [("attr", n) for n in schema.attr_fields_solution]
        com = [("attr", n) for n in schema.attr_fields_company]
    elif group == "text":
        sol = [("desc", n) for n in schema.desc_fields_solution] + [("attr", n) for n in schema.attr_fields_solution]
        com = [("desc", n) for n in schema.desc_fields_company] + [("attr", n) for n in schema.attr_fields_company]
    else:
        raise ValueError(f"unknown group {group!r}")
    return sol + com, len(sol)


def assemble(s: SolutionRecord, c: CompanyRecord, schema: FieldSchema, vocab: Vocab, max_len: int | None, group: str) -> TokenSequence:
    layout, n_sol = field_layout(schema, group)
    contents = []
    for idx, (kind, name) in enumerate(layout):
        rec = s if idx < n_sol else c
        if kind == "desc":
            contents.append(_desc_content(rec.desc.get(name), vocab))
        else:
            contents.append(_attr_content(rec.attr.get(name), vocab))
    seq = render(contents, n_sol, group)
    if max_len is not None:
        seq = pad_or_truncate(seq, max_len)
    return seq


def assemble_description(s, c, schema, vocab, max_len=None) -> TokenSequence:
    return assemble(s, c, schema, vocab, max_len, "description")


def assemble_attribute(s, c, schema, vocab, max_len=None) -> TokenSequence:
    return assemble(s, c, schema, vocab, max_len, "attribute")


def _units(content: list[int]) -> int:
    return sum(1 for t in content if t != EOS)


def _min_content(content: list[int]) -> int:
    # one word plus its closing [EOS] for tag fields, one token otherwise
    return 2 if EOS in content else 1


def frame_size(seq: TokenSequence) -> int:
    return 1 + sum(_min_content(c) + 1 for c in seq.field_contents()) + 2


def _drop_last_unit(content: list[int]) -> None:
    if content[-1] == EOS:
        content.pop(-2)
        if len(content) == 1 or content[-2] == EOS:
            content.pop()  # tag emptied: its [EOS] goes too
    else:
        content.pop()


def pad_or_truncate(seq: TokenSequence, max_len: int) -> TokenSequence:
    """Pad with [PAD] or trim content from the longest field, one token at a time.

    Structural tokens are never removed and every field keeps at least one
    content token. Ties between equally long fields go to the earlier field.
    """
    real = strip_padding(seq)
    if len(real) > max_len:
        if frame_size(real) > max_len:
            raise SequenceError(f"structural frame of {frame_size(real)} tokens exceeds max_len={max_len}")
        contents = [list(c) for c in real.field_contents()]
        excess = len(real) - max_len
        while excess > 0:
            best = max(
                (f for f in range(len(contents)) if len(contents[f]) > _min_content(contents[f])),
                key=lambda f: (_units(contents[f]), -f),
            )
            before = len(contents[best])
            _drop_last_unit(contents[best])
            excess -= before - len(contents[best])
        real = render(contents, real.n_solution_fields, real.group)
        # emptied-tag [EOS] removal can overshoot by one token; that is fine
    n_pad = max_len - len(real)
    return replace(
        real,
        token_ids=real.token_ids + [PAD] * n_pad,
        field_ids=real.field_ids + [real.pad_field] * n_pad,
        length=len(real),
    )


def strip_padding(seq: TokenSequence) -> TokenSequence:
    if seq.length == len(seq.token_ids):
        return seq
    return replace(seq, token_ids=seq.token_ids[: seq.length], field_ids=seq.field_ids[: seq.length], length=seq.length)


def check_sequence(seq: TokenSequence) -> list[str]:
    """Return every violated TokenSequence invariant (empty list when valid)."""
    problems = []
    tok, fid, n = seq.token_ids, seq.field_ids, seq.length
    if len(tok) != len(fid):
        problems.append("token/field length mismatch")
        return problems
    if not tok or tok[0] != CLS or fid[0] != 0:
        problems.append("position 0 is not [CLS] with field id 0")
    if any(t != PAD for t in tok[n:]) or any(f != seq.pad_field for f in fid[n:]):
        problems.append("padding region holds non-[PAD] tokens or ids")
    if PAD in tok[:n]:
        problems.append("[PAD] inside real tokens")
    real = tok[:n]
    doubles = sum(1 for i in range(1, n) if real[i] == SEP and real[i - 1] == SEP)
    if doubles != 2:
        problems.append(f"expected 2 block-final double [SEP], found {doubles}")
    if sorted(seq.sep_positions) != list(range(1, seq.n_fields + 1)):
        problems.append("sep_positions does not cover every field")
        return problems
    if seq.boundary != seq.sep_positions[seq.n_solution_fields] + 2:
        problems.append("boundary is not right after the solution block")
    start = 1
    for f in range(1, seq.n_fields + 1):
        end = seq.sep_positions[f]
        if end >= n or real[end] != SEP:
            problems.append(f"field {f}: trailing [SEP] missing")
            break
        span = real[start:end]
        if not span or any(t == SEP for t in span):
            problems.append(f"field {f}: empty or malformed content")
        if FIELD_MASK in span and len(span) != 1:
            problems.append(f"field {f}: [field_mask] mixed with other tokens")
        if EOS in span and span[-1] != EOS:
            problems.append(f"field {f}: last tag not closed by [EOS]")
        if any(span[i] == EOS and span[i - 1] == EOS for i in range(1, len(span))) or (span and span[0] == EOS):
            problems.append(f"field {f}: empty tag")
        stop = end + 1 + (1 if f in (seq.n_solution_fields, seq.n_fields) else 0)
        if any(x != f for x in fid[start:stop]):
            problems.append(f"field {f}: field ids not constant over its span")
        start = stop
    if start != n:
        problems.append("tokens after the company block")
    if len(set(fid[:n])) != seq.n_fields + 1:
        problems.append("field ids do not take n_fields + 1 distinct values")
    return problems


def to_arrays(seqs: list[TokenSequence]) -> dict[str, np.ndarray]:
    """Stack equally padded sequences into integer arrays for a batch."""
    L = {len(s) for s in seqs}
    if len(L) != 1:
        raise SequenceError("sequences in a batch must share one padded length")
    return {
        "tokens": np.array([s.token_ids for s in seqs], dtype=np.int64),
        "fields": np.array([s.field_ids for s in seqs], dtype=np.int64),
        "mask": np.array([s.attention_mask for s in seqs], dtype=bool),
        "seps": np.array([[s.sep_positions[f] for f in range(1, s.n_fields + 1)] for s in seqs], dtype=np.int64),
    }
