"""Synthetic solution/company corpus with planted industry and scale-band match structure.

Every entity gets a latent industry vector and a scale band. A solution's
positives are drawn without replacement with weights

    exp(SHARPNESS * (text_signal * overlap + scale_signal * band_compat))

so with both strengths at zero the positives are uniform. Text fields carry
the industry through keyword templates; company scope and copyright fields
deliberately mention a distractor industry, so which field a keyword sits in
carries information. Field lengths vary from record to record, so a token's
position alone does not reveal its field.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .data import CompanyRecord, FieldSchema, SolutionRecord

N_BANDS = 3
SHARPNESS = 6.0
KEYWORDS_PER_INDUSTRY = 6
SECONDARY_RATE = 0.3
# cloud solutions mostly target larger customers; companies are spread evenly
SOLUTION_BAND_PROBS = (0.15, 0.25, 0.6)

SCHEMA = FieldSchema(
    desc_fields_solution=("name", "introduction"),
    desc_fields_company=("name", "introduction", "business_scope"),
    attr_fields_solution=("industry", "product_category"),
    attr_fields_company=("first_industry", "second_industry", "copyright"),
    categorical_fields=(("status", N_BANDS), ("listed", 2)),
    numeric_fields=("app_count", "registered_capital", "employees"),
)

_SIZE_WORDS = (("startup", "small", "lean"), ("midsize", "growing", "regional"), ("enterprise", "large", "national"))
_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SynthConfig:
    n_solutions: int = 20
    n_companies: int = 2000
    n_industries: int = 5
    vocab_seed_words: int = 400
    positives_per_solution: int = 40
    text_signal_strength: float = 0.9
    scale_signal_strength: float = 0.6
    missing_field_rate: float = 0.05
    missing_token_rate: float = 0.02
    seed: int = 0

    def __post_init__(self):
        for name in ("n_solutions", "n_companies", "n_industries", "vocab_seed_words", "positives_per_solution"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("text_signal_strength", "scale_signal_strength", "missing_field_rate", "missing_token_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class Latent:
    industry: np.ndarray  # (n, n_industries), unit rows
    primary: np.ndarray
    band: np.ndarray


@dataclass
class SyntheticCorpus:
    schema: FieldSchema
    solutions: list[SolutionRecord]
    companies: list[CompanyRecord]
    positives: list[tuple[str, str]]
    solution_latent: Latent
    company_latent: Latent
    keywords: list[list[str]] = field(default_factory=list)

    def __iter__(self):
        return iter((self.solutions, self.companies, self.positives))


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        syll = rng.integers(2, 4)
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syll))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _latent(rng: np.random.Generator, n: int, n_industries: int, band_probs=None) -> Latent:
    primary = rng.integers(n_industries, size=n)
    vec = np.zeros((n, n_industries))
    vec[np.arange(n), primary] = 1.0
    if n_industries > 1:
        has_secondary = rng.random(n) < SECONDARY_RATE
        shift = rng.integers(1, n_industries, size=n)
        secondary = (primary + shift) % n_industries
        vec[np.arange(n)[has_secondary], secondary[has_secondary]] = 0.5
    vec /= np.linalg.norm(vec, axis=1, keepdims=True)
    band = rng.choice(N_BANDS, size=n, p=band_probs) if band_probs is not None else rng.integers(N_BANDS, size=n)
    return Latent(vec, primary, band)


def band_compatibility(solution_band, company_band):
    return 1.0 - np.abs(np.asarray(solution_band) - np.asarray(company_band)) / (N_BANDS - 1)


def match_propensity(overlap, compat, text_signal: float, scale_signal: float):
    """Unnormalized weight of a (solution, company) pair being drawn as positive."""
    return np.exp(SHARPNESS * (text_signal * np.asarray(overlap) + scale_signal * np.asarray(compat)))


def _secondary(lat: Latent, i: int) -> int | None:
    nz = np.flatnonzero(lat.industry[i])
    others = [k for k in nz if k != lat.primary[i]]
    return int(others[0]) if others else None


def generate_corpus(config: SynthConfig) -> SyntheticCorpus:
    if config.positives_per_solution > config.n_companies:
        raise ValueError("positives_per_solution exceeds n_companies")
    rng = np.random.default_rng(config.seed)
    taken: set[str] = set()
    for words in _SIZE_WORDS:
        taken.update(words)
    kw = [_pseudo_words(rng, KEYWORDS_PER_INDUSTRY, taken) for _ in range(config.n_industries)]
    filler = _pseudo_words(rng, config.vocab_seed_words, taken)
    n_suffix = max(8, -(-config.n_companies // (config.n_industries * KEYWORDS_PER_INDUSTRY)) * 2)
    suffixes = _pseudo_words(rng, n_suffix, taken)

    def pick(seq, k=1):
        idx = rng.choice(len(seq), size=k, replace=False)
        return [seq[i] for i in idx]

    def padding(low=0, high=4) -> str:
        n = int(rng.integers(low, high + 1))
        return "".join(w + " " for w in pick(filler, n)) if n else ""

    def other_industry(primary: int) -> int:
        if config.n_industries == 1:
            return primary
        return int((primary + rng.integers(1, config.n_industries)) % config.n_industries)

    s_lat = _latent(rng, config.n_solutions, config.n_industries, SOLUTION_BAND_PROBS)
    c_lat = _latent(rng, config.n_companies, config.n_industries)

    solutions = []
    for i in range(config.n_solutions):
        p, band = int(s_lat.primary[i]), int(s_lat.band[i])
        sec = _secondary(s_lat, i)
        k1, k2 = pick(kw[p], 2)
        f = pick(filler, 5)
        size = pick(_SIZE_WORDS[band])[0]
        tags = [f"{k1} {f[0]}"]
        if sec is not None:
            tags.append(pick(kw[sec])[0])
        categories = [" ".join(pick(filler, int(rng.integers(1, 3)))) for _ in range(int(rng.integers(1, 4)))]
        solutions.append(
            SolutionRecord(
                id=f"S{i:03d}",
                desc={
                    "name": f"{k1} {f[1]} cloud",
                    "introduction": f"a {f[2]} solution {padding()}for {k2} {f[3]} built for {size} {f[4]} teams",
                },
                attr={"industry": tags, "product_category": categories},
            )
        )

    companies = []
    names = set()
    for i in range(config.n_companies):
        p, band = int(c_lat.primary[i]), int(c_lat.band[i])
        sec = _secondary(c_lat, i)
        while True:
            name = f"{pick(kw[p])[0]} {pick(suffixes)[0]}"
            if name not in names or len(names) >= len(kw[p]) * len(suffixes) * config.n_industries:
                names.add(name)
                break
        k1 = pick(kw[p])[0]
        d = other_industry(p)
        d1, d2 = pick(kw[d], 2)
        f = pick(filler, 6)
        scope = [f"{d1} {f[3]}", f"{d2} {f[4]}"] + [f"{w} {padding(0, 1)}".strip() for w in pick(kw[d], int(rng.integers(0, 2)))]
        rights = [f"{d1} {f[5]}", d2] + pick(filler, int(rng.integers(0, 3)))
        second = pick(kw[sec])[0] if sec is not None else pick(kw[p])[0]
        status = band if rng.random() < 0.8 else int(rng.integers(N_BANDS))
        listed = int(rng.random() < (0.05, 0.2, 0.7)[band])
        companies.append(
            CompanyRecord(
                id=f"C{i:05d}",
                desc={
                    "name": name,
                    "introduction": f"{f[0]} is a {f[1]} company {padding()}working on {k1} {f[2]}",
                    "business_scope": f"scope covers {padding(0, 2)}" + " and ".join(scope),
                },
                attr={
                    "first_industry": [k1],
                    "second_industry": [second],
                    "copyright": rights,
                },
                categorical={"status": int(status), "listed": listed},
                numeric={
                    "app_count": float(rng.poisson((2.0, 8.0, 30.0)[band])),
                    "registered_capital": float(np.round(np.exp(rng.normal((1.0, 3.0, 5.0)[band], 0.5)), 3)),
                    "employees": float(np.round(np.exp(rng.normal((2.5, 4.0, 6.0)[band], 0.4)))),
                },
            )
        )

    overlap = s_lat.industry @ c_lat.industry.T
    compat = band_compatibility(s_lat.band[:, None], c_lat.band[None, :])
    weights = match_propensity(overlap, compat, config.text_signal_strength, config.scale_signal_strength)
    positives = []
    for i in range(config.n_solutions):
        # Gumbel top-k: sampling without replacement proportional to weights
        keys = np.log(weights[i]) + rng.gumbel(size=config.n_companies)
        top = np.argsort(-keys, kind="stable")[: config.positives_per_solution]
        positives.extend((solutions[i].id, companies[j].id) for j in sorted(top))

    corpus = SyntheticCorpus(SCHEMA, solutions, companies, positives, s_lat, c_lat, kw)
    if config.missing_field_rate > 0 or config.missing_token_rate > 0:
        sub = int(rng.integers(2**31))
        corpus.solutions = inject_missingness(solutions, config.missing_field_rate, config.missing_token_rate, sub)
        corpus.companies = inject_missingness(companies, config.missing_field_rate, config.missing_token_rate, sub + 1)
    return corpus


def inject_missingness(records, field_rate: float, token_rate: float, seed: int):
    """Drop whole text fields, then single whitespace tokens, at the given rates.

    Categorical and numeric features are never touched. A field left with no
    tokens becomes absent. Input records are not modified.
    """
    rng = np.random.default_rng(seed)
    out = []
    for rec in records:
        rec = copy.deepcopy(rec)
        for name in list(rec.desc):
            if rng.random() < field_rate:
                del rec.desc[name]
                continue
            toks = [t for t in rec.desc[name].split() if not rng.random() < token_rate]
            if toks:
                rec.desc[name] = " ".join(toks)
            else:
                del rec.desc[name]
        for name in list(rec.attr):
            if rng.random() < field_rate:
                del rec.attr[name]
                continue
            tags = []
            for tag in rec.attr[name]:
                toks = [t for t in tag.split() if not rng.random() < token_rate]
                if toks:
                    tags.append(" ".join(toks))
            if tags:
                rec.attr[name] = tags
            else:
                del rec.attr[name]
        out.append(rec)
    return out


def overlap_and_compat(corpus: SyntheticCorpus, pairs):
    """Latent (industry overlap, band compatibility) for (solution_id, company_id) pairs."""
    s_index = {s.id: i for i, s in enumerate(corpus.solutions)}
    c_index = {c.id: i for i, c in enumerate(corpus.companies)}
    si = np.array([s_index[s] for s, _ in pairs])
    ci = np.array([c_index[c] for _, c in pairs])
    overlap = np.einsum("ij,ij->i", corpus.solution_latent.industry[si], corpus.company_latent.industry[ci])
    compat = band_compatibility(corpus.solution_latent.band[si], corpus.company_latent.band[ci])
    return overlap, compat
