"""Token masking, field masking and company replacing for contrastive views."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from .data import CompanyRecord, FieldSchema, SolutionRecord
from .textseq import FIELD_MASK, PAD, TOKEN_MASK, TokenSequence, Vocab, assemble, render, strip_padding

STRATEGIES = ("token_mask", "field_mask", "company_replace")
TOP_K = 5


def token_mask(seq: TokenSequence, r_t: float, rng: np.random.Generator) -> TokenSequence:
    """Replace floor(r_t * W) content tokens, chosen without replacement, by [token_mask]."""
    positions = seq.content_positions()
    n = int(np.floor(r_t * len(positions)))
    if n == 0:
        return seq
    chosen = rng.choice(len(positions), size=n, replace=False)
    tokens = list(seq.token_ids)
    for i in chosen:
        tokens[positions[i]] = TOKEN_MASK
    return replace(seq, token_ids=tokens)


def field_mask(seq: TokenSequence, r_f: float, rng: np.random.Generator) -> TokenSequence:
    """Collapse floor(r_f * F) whole fields to a single [field_mask] token.

    The trailing [SEP] and the field id survive; total padded length is kept.
    """
    n = int(np.floor(r_f * seq.n_fields))
    if n == 0:
        return seq
    chosen = set(int(i) for i in rng.choice(seq.n_fields, size=n, replace=False))
    contents = [[FIELD_MASK] if f in chosen else c for f, c in enumerate(strip_padding(seq).field_contents())]
    out = render(contents, seq.n_solution_fields, seq.group)
    n_pad = len(seq.token_ids) - len(out)
    if n_pad <= 0:
        return out
    return replace(out, token_ids=out.token_ids + [PAD] * n_pad,
                   field_ids=out.field_ids + [out.pad_field] * n_pad, length=len(out))


@dataclass
class SimilarityIndex:
    neighbors: dict[str, list[tuple[str, float]]]

    def __getitem__(self, company_id: str) -> list[tuple[str, float]]:
        return self.neighbors[company_id]

    def __contains__(self, company_id: str) -> bool:
        return company_id in self.neighbors

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for cid, nb in self.neighbors.items():
                fh.write(json.dumps({"id": cid, "neighbors": [n for n, _ in nb], "scores": [s for _, s in nb]}) + "\n")

    @classmethod
    def load(cls, path) -> "SimilarityIndex":
        out = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            out[obj["id"]] = list(zip(obj["neighbors"], obj["scores"]))
        return cls(out)


def trigrams(name: str) -> list[str]:
    name = name.lower()
    if not name:
        return []
    if len(name) < 3:
        return [name]
    return [name[i : i + 3] for i in range(len(name) - 2)]


def trigram_vectors(names: list[str]) -> sparse.csr_matrix:
    """L2-normalized character-trigram count vectors, one row per name."""
    index: dict[str, int] = {}
    rows, cols, vals = [], [], []
    for r, name in enumerate(names):
        counts: dict[int, int] = {}
        for g in trigrams(name):
            j = index.setdefault(g, len(index))
            counts[j] = counts.get(j, 0) + 1
        for j, v in sorted(counts.items()):
            rows.append(r)
            cols.append(j)
            vals.append(float(v))
    X = sparse.csr_matrix((vals, (rows, cols)), shape=(len(names), max(len(index), 1)))
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    return sparse.diags(1.0 / norms) @ X


def build_similarity_index(companies: list[CompanyRecord], k: int = TOP_K, chunk: int = 1024) -> SimilarityIndex:
    """Top-k most similar company names by trigram cosine, self excluded.

    Ties are broken by ascending company id. A company without a name has a
    zero vector, so its similarity to every other company is 0.
    """
    if len(companies) < 2:
        raise ValueError("similarity index needs at least two companies")
    ids = [c.id for c in companies]
    X = trigram_vectors([c.desc.get("name", "") for c in companies])
    id_rank = np.argsort(np.argsort(np.array(ids, dtype=object), kind="stable"), kind="stable")
    neighbors = {}
    for start in range(0, len(ids), chunk):
        sims = (X[start : start + chunk] @ X.T).toarray()
        for r in range(sims.shape[0]):
            i = start + r
            row = sims[r]
            row[i] = -np.inf
            order = np.lexsort((id_rank, -row))
            picked = [j for j in order[:k] if np.isfinite(row[j])]
            neighbors[ids[i]] = [(ids[j], float(np.clip(row[j], -1.0, 1.0))) for j in picked]
    return SimilarityIndex(neighbors)


def company_replace(pair: tuple[SolutionRecord, CompanyRecord], index: SimilarityIndex,
                    companies: dict[str, CompanyRecord], rng: np.random.Generator):
    s, c = pair
    if c.id not in index:
        raise KeyError(f"company {c.id!r} is not in the similarity index")
    nb = index[c.id]
    if not nb:
        raise ValueError(f"company {c.id!r} has no neighbors")
    pick = nb[int(rng.integers(len(nb)))][0]
    return s, companies[pick]


@dataclass
class Augmenter:
    """Produces two differently augmented views of a (solution, company) pair for one group."""

    schema: FieldSchema
    vocab: Vocab
    group: str
    max_len: int
    r_t: float = 0.2
    r_f: float = 0.5
    index: SimilarityIndex | None = None
    companies: dict[str, CompanyRecord] | None = None
    enabled: tuple[str, ...] = STRATEGIES

    def available(self, label: int) -> list[str]:
        out = [st for st in ("token_mask", "field_mask") if st in self.enabled]
        if label == 1 and "company_replace" in self.enabled and self.index is not None:
            out.append("company_replace")
        return out

    def assemble(self, s, c) -> TokenSequence:
        return assemble(s, c, self.schema, self.vocab, self.max_len, self.group)

    def apply(self, strategy: str, s, c, seq: TokenSequence, rng) -> TokenSequence:
        if strategy == "token_mask":
            return token_mask(seq, self.r_t, rng)
        if strategy == "field_mask":
            return field_mask(seq, self.r_f, rng)
        if strategy == "company_replace":
            _, c2 = company_replace((s, c), self.index, self.companies, rng)
            return self.assemble(s, c2)
        raise ValueError(f"unknown strategy {strategy!r}")

    def choose(self, label: int, rng) -> tuple[str | None, str | None]:
        avail = self.available(label)
        if len(avail) >= 2:
            i, j = rng.choice(len(avail), size=2, replace=False)
            return avail[i], avail[j]
        if len(avail) == 1:
            return avail[0], avail[0]
        return None, None

    def augment_pair(self, s, c, label: int, rng, seq: TokenSequence | None = None):
        """Return (view_1, view_2, (strategy_1, strategy_2))."""
        seq = self.assemble(s, c) if seq is None else seq
        strategies = self.choose(label, rng)
        views = tuple(seq if st is None else self.apply(st, s, c, seq, rng) for st in strategies)
        return views[0], views[1], strategies


def count_masked_fields(before: TokenSequence, after: TokenSequence) -> int:
    """Fields that hold exactly [field_mask] after but not before."""
    b, a = before.field_contents(), after.field_contents()
    return sum(1 for x, y in zip(b, a) if y == [FIELD_MASK] and x != [FIELD_MASK])

