"""End-to-end runs on the synthetic corpus: pipeline, ablations and sweeps."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import STRATEGIES, Augmenter, SimilarityIndex, build_similarity_index
from .config import RunConfig
from .data import CompanyRecord, FieldSchema, MatchExample, SolutionRecord, build_examples, split_dataset
from .model import ABLATION_FLAGS, GROUP_OF, MatchModel, ModelConfig
from .pretrain import PretrainConfig, pretrain_encoder
from .scale import fit_standardization, set_standardization
from .synth import SynthConfig, generate_corpus
from .textseq import Vocab, build_vocab, record_texts
from .training import MetricsReport, TrainConfig, TrainResult, evaluate, random_baseline, train

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("d_s", "tau_d", "tau_a", "r_t", "r_f")


def subseed(seed: int, tag: str) -> int:
    """Independent, reproducible seed for one named stage."""
    return int(np.random.SeedSequence([seed, zlib.crc32(tag.encode())]).generate_state(1)[0])


@dataclass
class PreparedData:
    schema: FieldSchema
    vocab: Vocab
    solutions: dict[str, SolutionRecord]
    companies: dict[str, CompanyRecord]
    train: list[MatchExample]
    validation: list[MatchExample]
    test: list[MatchExample]
    index: SimilarityIndex | None = None

    def similarity_index(self) -> SimilarityIndex:
        if self.index is None:
            self.index = build_similarity_index([self.companies[k] for k in sorted(self.companies)])
        return self.index


def synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig(cfg.n_solutions, cfg.n_companies, cfg.n_industries, cfg.vocab_seed_words,
                       cfg.positives_per_solution, cfg.text_signal, cfg.scale_signal,
                       cfg.missing_field_rate, cfg.missing_token_rate, subseed(cfg.seed, "corpus"))


def make_splits(cfg: RunConfig, positives, companies):
    examples = build_examples(positives, companies, cfg.negatives_per_positive, subseed(cfg.seed, "negatives"))
    return split_dataset(examples, (cfg.train_ratio, cfg.val_ratio, cfg.test_ratio), subseed(cfg.seed, "split"))


def prepare_data(cfg: RunConfig) -> PreparedData:
    corpus = generate_corpus(synth_config(cfg))
    tr, va, te = make_splits(cfg, corpus.positives, corpus.companies)
    vocab = build_vocab(record_texts(corpus.solutions + corpus.companies), cfg.min_count)
    return PreparedData(corpus.schema, vocab, {s.id: s for s in corpus.solutions},
                        {c.id: c for c in corpus.companies}, tr, va, te)


def model_config(cfg: RunConfig, flags=()) -> ModelConfig:
    base = ModelConfig(cfg.d_e, cfg.n_layers, cfg.n_heads, cfg.d_ff, cfg.max_len_desc, cfg.max_len_attr,
                       cfg.k_field_layers, cfg.d_s, cfg.buckets, cfg.alpha)
    return base.with_flags(flags)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(cfg.batch_size, cfg.epochs, cfg.lr_token, cfg.lr_scale, cfg.lr_field, subseed(cfg.seed, "train"))


def build_model(cfg: RunConfig, data: PreparedData, flags=()) -> MatchModel:
    model = MatchModel(model_config(cfg, flags), data.schema, data.vocab, seed=subseed(cfg.seed, "init"))
    if model.cfg.use_scale:
        used = sorted({e.company_id for e in data.train})
        mean, std = fit_standardization([data.companies[c] for c in used], data.schema)
        set_standardization(model.store, mean, std)
    return model


def enabled_strategies(flags) -> tuple[str, ...]:
    off = {"no_token_masking": "token_mask", "no_field_masking": "field_mask", "no_company_replacing": "company_replace"}
    return tuple(s for s in STRATEGIES if not any(f in flags and off[f] == s for f in off))


def pretrain_model(model: MatchModel, cfg: RunConfig, data: PreparedData, flags=()) -> dict[str, list]:
    """Contrastive pretraining of every token encoder on the training pairs."""
    pairs = [(data.solutions[e.solution_id], data.companies[e.company_id], e.label) for e in data.train]
    strategies = enabled_strategies(flags)
    index = data.similarity_index() if "company_replace" in strategies else None
    histories = {}
    for enc in model.cfg.encoders:
        tau = cfg.tau_a if enc == "attr" else cfg.tau_d
        pcfg = PretrainConfig(tau, cfg.r_t, cfg.r_f, cfg.pretrain_epochs, cfg.pretrain_batch, cfg.lr_pretrain,
                              subseed(cfg.seed, f"pretrain-{enc}"), strategies)
        aug = Augmenter(data.schema, data.vocab, GROUP_OF[enc], model.cfg.max_len(enc), cfg.r_t, cfg.r_f,
                        index, data.companies, strategies)
        histories[enc] = pretrain_encoder(model, enc, pairs, pcfg, aug)
    return histories


@dataclass
class RunResult:
    report: MetricsReport
    train_result: TrainResult
    pretrain_history: dict


def run_variant(cfg: RunConfig, data: PreparedData, flags=()) -> RunResult:
    flags = tuple(flags)
    model = build_model(cfg, data, flags)
    hist = {}
    if cfg.use_pretrained and "no_pretrain" not in flags and cfg.pretrain_epochs > 0:
        hist = pretrain_model(model, cfg, data, flags)
    result = train(model, data.train, data.validation, data.solutions, data.companies, train_config(cfg))
    report = evaluate(result.model, data.test, data.solutions, data.companies,
                      fingerprint=cfg.fingerprint(), seed=cfg.seed)
    return RunResult(report, result, hist)


def ablate(cfg: RunConfig, flags, data: PreparedData | None = None) -> dict[str, MetricsReport]:
    """Full model plus one variant per flag, all on the same data and seeds."""
    unknown = set(flags) - set(ABLATION_FLAGS)
    if unknown:
        raise ValueError(f"unknown ablation flags {sorted(unknown)}")
    data = prepare_data(cfg) if data is None else data
    out = {"full": run_variant(cfg, data).report}
    for flag in flags:
        out[flag] = run_variant(cfg, data, (flag,)).report
    return out


def sweep(cfg: RunConfig, param: str, grid, data: PreparedData | None = None) -> list[tuple[float, float]]:
    """(value, test MAP) for each grid point, same seed throughout."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose one of {SWEEP_PARAMS}")
    if len(grid) == 0:
        raise ValueError("sweep grid is empty")
    data = prepare_data(cfg) if data is None else data
    rows = []
    for value in grid:
        point = cfg.override({param: value})
        rows.append((float(value), run_variant(point, data).report.metrics["MAP"]))
    return rows


def write_curve(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{v!r}\t{m!r}\n" for v, m in rows), encoding="utf-8")


def write_ablation_summary(reports: dict[str, MetricsReport], path) -> None:
    names = ["MAP", "AUC", "R@10", "P@10"]
    lines = ["variant\t" + "\t".join(names)]
    for variant, rep in reports.items():
        lines.append(variant + "\t" + "\t".join(f"{rep.metrics.get(n, float('nan')):.6f}" for n in names))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def baseline_map(data: PreparedData, seed: int = 0) -> float:
    return random_baseline(data.test, seed)["MAP"]

