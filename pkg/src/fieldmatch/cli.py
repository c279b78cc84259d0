"""Command-line entry point: data, vocabulary, pretraining, training, evaluation and diagnostics.

Every command reads one flat config file (plus ``--set key=value`` and
``--seed`` overrides) and works inside ``--out-dir``::

    data/{schema.txt, train.jsonl, validation.jsonl, test.jsonl, similarity.jsonl}
    vocab.txt
    ckpt/{stage}-{fingerprint}.ckpt
    curves/*.tsv
    reports/*.jsonl
    fieldmatch.log          timestamps live here only
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import gradcheck
from . import tensor as T
from .augment import SimilarityIndex, build_similarity_index
from .config import ConfigError, RunConfig
from .data import Dataset, DatasetFormatError, SamplingError, load_dataset, load_schema, store_dataset, store_schema
from .experiments import (
    PreparedData, ablate, build_model, make_splits, pretrain_model, subseed, sweep, synth_config,
    train_config, write_ablation_summary, write_curve,
)
from .model import ABLATION_FLAGS, MatchModel
from .synth import generate_corpus
from .textseq import SequenceError, Vocab, build_vocab, record_texts
from .training import evaluate, rank_companies, train

log = logging.getLogger("fieldmatch")

SPLIT_FILES = ("train", "validation", "test")


class MissingInputError(FileNotFoundError):
    pass


# ---------------------------------------------------------------- paths and loading


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{path} not found; run `{hint}` first")
    return path


def ckpt_path(out: Path, stage: str, cfg: RunConfig) -> Path:
    return out / "ckpt" / f"{stage}-{cfg.fingerprint()}.ckpt"


def load_data(out: Path) -> PreparedData:
    data_dir = out / "data"
    schema = load_schema(_require(data_dir / "schema.txt", "gen-data"))
    splits = {name: load_dataset(_require(data_dir / f"{name}.jsonl", "gen-data"), schema) for name in SPLIT_FILES}
    vocab = Vocab.load(_require(out / "vocab.txt", "build-vocab"))
    first = splits["train"]
    index_path = data_dir / "similarity.jsonl"
    index = SimilarityIndex.load(index_path) if index_path.exists() else None
    return PreparedData(schema, vocab, first.solution_map(), first.company_map(),
                        splits["train"].examples, splits["validation"].examples, splits["test"].examples, index)


def load_model(cfg: RunConfig, data: PreparedData, path: Path, hint: str) -> MatchModel:
    store, meta = T.load_checkpoint(_require(path, hint))
    if meta.get("fingerprint") != cfg.fingerprint():
        raise ValueError(f"{path}: checkpoint fingerprint {meta.get('fingerprint')} does not match config")
    model = build_model(cfg, data)
    model.store.load_values(store)
    return model


def _meta(stage: str, cfg: RunConfig) -> dict:
    return {"stage": stage, "fingerprint": cfg.fingerprint(), "seed": cfg.seed}


# ---------------------------------------------------------------- commands


def cmd_gen_data(cfg: RunConfig, out: Path, args) -> None:
    corpus = generate_corpus(synth_config(cfg))
    train_ex, val_ex, test_ex = make_splits(cfg, corpus.positives, corpus.companies)
    data_dir = out / "data"
    store_schema(corpus.schema, data_dir / "schema.txt")
    # each split file carries the full record set so it can be read on its own
    for name, ex in zip(SPLIT_FILES, (train_ex, val_ex, test_ex)):
        store_dataset(Dataset(corpus.solutions, corpus.companies, ex, name), data_dir / f"{name}.jsonl")
    build_similarity_index(sorted(corpus.companies, key=lambda c: c.id)).save(data_dir / "similarity.jsonl")
    print(f"solutions={len(corpus.solutions)} companies={len(corpus.companies)} "
          f"train={len(train_ex)} validation={len(val_ex)} test={len(test_ex)}")


def cmd_build_vocab(cfg: RunConfig, out: Path, args) -> None:
    ds = load_dataset(_require(out / "data" / "train.jsonl", "gen-data"))
    vocab = build_vocab(record_texts(ds.solutions + ds.companies), cfg.min_count)
    vocab.save(out / "vocab.txt")
    print(f"vocab size={len(vocab)}")


def cmd_pretrain(cfg: RunConfig, out: Path, args) -> None:
    data = load_data(out)
    model = build_model(cfg, data)
    histories = pretrain_model(model, cfg, data)
    for enc, hist in histories.items():
        write_curve(hist, out / "curves" / f"pretrain-{enc}-{cfg.fingerprint()}.tsv")
        print(f"{enc}: {len(hist)} steps, final loss {hist[-1][1]:.4f}" if hist else f"{enc}: no steps")
    path = ckpt_path(out, "pretrain", cfg)
    T.save_checkpoint(model.store, path, _meta("pretrain", cfg))
    print(path)


def cmd_train(cfg: RunConfig, out: Path, args) -> None:
    data = load_data(out)
    if cfg.use_pretrained and cfg.pretrain_epochs > 0:
        model = load_model(cfg, data, ckpt_path(out, "pretrain", cfg), "pretrain")
    else:
        model = build_model(cfg, data)
    result = train(model, data.train, data.validation, data.solutions, data.companies, train_config(cfg))
    rows = [(i, loss) for i, loss in enumerate(result.epoch_loss)]
    write_curve(rows, out / "curves" / f"train-{cfg.fingerprint()}.tsv")
    if result.val_map:
        write_curve(list(enumerate(result.val_map)), out / "curves" / f"val-map-{cfg.fingerprint()}.tsv")
    path = ckpt_path(out, "train", cfg)
    T.save_checkpoint(result.model.store, path, _meta("train", cfg) | {"best_epoch": result.best_epoch})
    print(f"initial loss {result.initial_loss:.4f}; epoch losses " + " ".join(f"{x:.4f}" for x in result.epoch_loss))
    print(path)


def cmd_eval(cfg: RunConfig, out: Path, args) -> None:
    data = load_data(out)
    model = load_model(cfg, data, ckpt_path(out, "train", cfg), "train")
    examples = {"validation": data.validation, "test": data.test}[args.split]
    report = evaluate(model, examples, data.solutions, data.companies, pool=args.pool,
                      fingerprint=cfg.fingerprint(), seed=cfg.seed)
    path = out / "reports" / f"eval-{args.split}-{args.pool}-{cfg.fingerprint()}.jsonl"
    report.save(path)
    for name, value in report.metrics.items():
        print(f"{name}\t{value:.6f}")
    print(path)


def cmd_rank(cfg: RunConfig, out: Path, args) -> None:
    data = load_data(out)
    if args.solution_id not in data.solutions:
        raise KeyError(f"unknown solution id {args.solution_id!r}")
    if args.top < 1:
        raise ValueError("--top must be at least 1")
    model = load_model(cfg, data, ckpt_path(out, "train", cfg), "train")
    ranking = rank_companies(model, data.solutions[args.solution_id], [data.companies[k] for k in sorted(data.companies)])
    for cid, score in ranking[: args.top]:
        print(f"{cid}\t{score:.6f}")


def cmd_ablate(cfg: RunConfig, out: Path, args) -> None:
    flags = [f for f in args.flags.split(",") if f]
    data = load_data(out)
    reports = ablate(cfg, flags, data)
    rep_dir = out / "reports" / f"ablate-{cfg.fingerprint()}"
    for variant, rep in reports.items():
        rep.save(rep_dir / f"{variant}.jsonl")
    write_ablation_summary(reports, rep_dir / "summary.tsv")
    print((rep_dir / "summary.tsv").read_text(encoding="utf-8"), end="")


def cmd_sweep(cfg: RunConfig, out: Path, args) -> None:
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"--grid must be comma-separated numbers, got {args.grid!r}") from None
    if args.param == "d_s":
        grid = [int(v) for v in grid]
    rows = sweep(cfg, args.param, grid, load_data(out))
    path = out / "curves" / f"sweep-{args.param}-{cfg.fingerprint()}.tsv"
    write_curve(rows, path)
    for value, m in rows:
        print(f"{value}\t{m:.6f}")
    print(path)


def cmd_grad_check(cfg: RunConfig, out: Path, args) -> int:
    results = gradcheck.run_suite(subseed(cfg.seed, "grad-check"))
    worst = max(results.values())
    for name, err in results.items():
        flag = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        print(f"{name:32s} {err:.3e} {flag}")
    print(f"max relative error {worst:.3e} (tolerance {gradcheck.TOLERANCE:g})")
    return 0 if worst < gradcheck.TOLERANCE else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-vocab": cmd_build_vocab,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "rank": cmd_rank,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "grad-check": cmd_grad_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value config file")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out-dir", type=Path, default=Path("run"), help="working directory for every artifact")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    parser = argparse.ArgumentParser(prog="fieldmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "build-vocab", "pretrain", "train", "grad-check"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("eval", parents=[common])
    p.add_argument("--split", choices=("validation", "test"), default="test")
    p.add_argument("--pool", choices=("labeled", "all"), default="labeled")
    p = sub.add_parser("rank", parents=[common])
    p.add_argument("--solution-id", required=True)
    p.add_argument("--top", type=int, default=10)
    p = sub.add_parser("ablate", parents=[common])
    p.add_argument("--flags", default=",".join(f for f in ABLATION_FLAGS),
                   help="comma-separated subset of: " + ", ".join(ABLATION_FLAGS))
    p = sub.add_parser("sweep", parents=[common])
    p.add_argument("--param", required=True, choices=("d_s", "tau_d", "tau_a", "r_t", "r_f"))
    p.add_argument("--grid", required=True, help="comma-separated values")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return cfg.override(overrides, "command line") if overrides else cfg


def _setup_logging(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "fieldmatch.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger("fieldmatch")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)
    root.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        _setup_logging(args.out_dir)
        log.info("%s fingerprint=%s seed=%d", args.command, cfg.fingerprint(), cfg.seed)
        status = COMMANDS[args.command](cfg, args.out_dir, args)
        return status or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingInputError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 3
    except DatasetFormatError as exc:
        print(f"bad data file: {exc}", file=sys.stderr)
        return 4
    except (SequenceError, SamplingError, T.ShapeError, T.NonFiniteError) as exc:
        print(f"invariant violated: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5
    except (KeyError, ValueError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
