"""Record schema, validation, line-delimited storage and pairwise example construction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SPLITS = ("train", "validation", "test")


class DatasetFormatError(ValueError):
    """Raised for a malformed line in a dataset or schema file."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class FieldSchema:
    desc_fields_solution: tuple[str, ...]
    desc_fields_company: tuple[str, ...]
    attr_fields_solution: tuple[str, ...]
    attr_fields_company: tuple[str, ...]
    categorical_fields: tuple[tuple[str, int], ...]
    numeric_fields: tuple[str, ...]

    def __post_init__(self):
        groups = {
            "desc_fields_solution": self.desc_fields_solution,
            "desc_fields_company": self.desc_fields_company,
            "attr_fields_solution": self.attr_fields_solution,
            "attr_fields_company": self.attr_fields_company,
            "categorical_fields": tuple(n for n, _ in self.categorical_fields),
            "numeric_fields": self.numeric_fields,
        }
        for group, names in groups.items():
            if len(names) < 1:
                raise ValueError(f"{group} must declare at least one field")
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate field name in {group}")
        for name, card in self.categorical_fields:
            if card < 2:
                raise ValueError(f"categorical field {name!r} needs cardinality >= 2, got {card}")

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.categorical_fields)

    def text_fields(self, kind: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """(solution_fields, company_fields) for kind in {'desc', 'attr'}."""
        if kind == "desc":
            return self.desc_fields_solution, self.desc_fields_company
        if kind == "attr":
            return self.attr_fields_solution, self.attr_fields_company
        raise ValueError(f"unknown text kind {kind!r}")


@dataclass
class SolutionRecord:
    id: str
    desc: dict[str, str] = field(default_factory=dict)
    attr: dict[str, list[str]] = field(default_factory=dict)


@dataclass
class CompanyRecord:
    id: str
    desc: dict[str, str] = field(default_factory=dict)
    attr: dict[str, list[str]] = field(default_factory=dict)
    categorical: dict[str, int] = field(default_factory=dict)
    numeric: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MatchExample:
    solution_id: str
    company_id: str
    label: int


@dataclass
class Dataset:
    solutions: list[SolutionRecord] = field(default_factory=list)
    companies: list[CompanyRecord] = field(default_factory=list)
    examples: list[MatchExample] = field(default_factory=list)
    split_tag: str = "train"

    def solution_map(self) -> dict[str, SolutionRecord]:
        return {s.id: s for s in self.solutions}

    def company_map(self) -> dict[str, CompanyRecord]:
        return {c.id: c for c in self.companies}


@dataclass
class ValidationReport:
    missing: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        # truthy when there is anything to report
        return bool(self.missing or self.errors)


def validate_record(record: SolutionRecord | CompanyRecord, schema: FieldSchema) -> ValidationReport:
    """Check a record against the schema.

    Absent text fields are reported as missing, which is allowed. Fields not in
    the schema, out-of-range categorical indices and non-finite numerics are
    errors. Nothing is raised.
    """
    report = ValidationReport()
    is_company = isinstance(record, CompanyRecord)
    if not record.id:
        report.errors.append("empty id")
    desc_fields = schema.desc_fields_company if is_company else schema.desc_fields_solution
    attr_fields = schema.attr_fields_company if is_company else schema.attr_fields_solution

    for group, declared, present in (("desc", desc_fields, record.desc), ("attr", attr_fields, record.attr)):
        for name in present:
            if name not in declared:
                report.errors.append(f"out-of-schema {group} field {name!r}")
        for name in declared:
            if name not in present:
                report.missing.append(name)

    if not is_company:
        return report

    cards = dict(schema.categorical_fields)
    for name, value in record.categorical.items():
        if name not in cards:
            report.errors.append(f"out-of-schema categorical field {name!r}")
        elif not (0 <= int(value) < cards[name]):
            report.errors.append(f"out-of-range categorical {name!r}={value} (cardinality {cards[name]})")
    for name in cards:
        if name not in record.categorical:
            report.errors.append(f"missing categorical field {name!r}")

    for name, value in record.numeric.items():
        if name not in schema.numeric_fields:
            report.errors.append(f"out-of-schema numeric field {name!r}")
        elif not math.isfinite(value):
            report.errors.append(f"non-finite numeric {name!r}={value}")
    for name in schema.numeric_fields:
        if name not in record.numeric:
            report.errors.append(f"missing numeric field {name!r}")
    return report


def build_examples(
    positives: Sequence[tuple[str, str]],
    companies: Sequence[CompanyRecord | str],
    negatives_per_positive: int,
    seed: int,
) -> list[MatchExample]:
    """Label every positive pair 1 and attach uniformly sampled negatives.

    Negatives for one solution are drawn together without replacement from the
    companies that are not positive for it, so no pair repeats. The output
    lists each positive immediately followed by its own negatives.
    """
    if negatives_per_positive < 0:
        raise ValueError("negatives_per_positive must be >= 0")
    if not companies:
        raise ValueError("companies must be non-empty")
    company_ids = [c if isinstance(c, str) else c.id for c in companies]
    rng = np.random.default_rng(seed)

    by_solution: dict[str, list[str]] = {}
    for sid, cid in positives:
        by_solution.setdefault(sid, []).append(cid)

    sampled: dict[str, list[str]] = {}
    for sid in sorted(by_solution):
        pos = set(by_solution[sid])
        need = len(by_solution[sid]) * negatives_per_positive
        if len(pos) + need > len(company_ids):
            raise SamplingError(
                f"solution {sid!r}: {len(pos)} positives + {need} negatives exceeds {len(company_ids)} companies"
            )
        pool = [cid for cid in company_ids if cid not in pos]
        picks = rng.choice(len(pool), size=need, replace=False) if need else []
        sampled[sid] = [pool[i] for i in picks]

    out: list[MatchExample] = []
    cursor = {sid: 0 for sid in by_solution}
    for sid, cid in positives:
        out.append(MatchExample(sid, cid, 1))
        i = cursor[sid]
        for neg in sampled[sid][i : i + negatives_per_positive]:
            out.append(MatchExample(sid, neg, 0))
        cursor[sid] = i + negatives_per_positive
    return out


def _groups(examples: Sequence[MatchExample]) -> list[list[MatchExample]]:
    groups: list[list[MatchExample]] = []
    for ex in examples:
        if ex.label == 1:
            groups.append([ex])
        elif not groups:
            raise ValueError("negative example precedes every positive; cannot attach it to a pair")
        else:
            groups[-1].append(ex)
    return groups


def split_dataset(
    examples: Sequence[MatchExample],
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> tuple[list[MatchExample], list[MatchExample], list[MatchExample]]:
    """Split by positive pair; each positive carries the negatives that follow it."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    groups = _groups(examples)
    n = len(groups)
    if n < 3:
        raise ValueError(f"need at least 3 positive pairs to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = min(int(round(ratios[1] * n)), n - n_train)
    assign = np.empty(n, dtype=int)
    assign[order[:n_train]] = 0
    assign[order[n_train : n_train + n_val]] = 1
    assign[order[n_train + n_val :]] = 2
    parts: tuple[list, list, list] = ([], [], [])
    for g, part in zip(groups, assign):
        parts[part].extend(g)
    return parts


# ---------------------------------------------------------------- file formats


def _solution_to_obj(s: SolutionRecord) -> dict:
    return {"kind": "solution", "id": s.id, "desc": s.desc, "attr": s.attr}


def _company_to_obj(c: CompanyRecord) -> dict:
    return {
        "kind": "company",
        "id": c.id,
        "desc": c.desc,
        "attr": c.attr,
        "categorical": c.categorical,
        "numeric": c.numeric,
    }


_KEYS = {
    "meta": {"kind", "split"},
    "solution": {"kind", "id", "desc", "attr"},
    "company": {"kind", "id", "desc", "attr", "categorical", "numeric"},
    "example": {"kind", "solution_id", "company_id", "label"},
}


def store_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "meta", "split": dataset.split_tag}) + "\n")
        for s in dataset.solutions:
            fh.write(json.dumps(_solution_to_obj(s), ensure_ascii=False) + "\n")
        for c in dataset.companies:
            fh.write(json.dumps(_company_to_obj(c), ensure_ascii=False) + "\n")
        for e in dataset.examples:
            obj = {"kind": "example", "solution_id": e.solution_id, "company_id": e.company_id, "label": e.label}
            fh.write(json.dumps(obj) + "\n")


def load_dataset(path, schema: FieldSchema | None = None) -> Dataset:
    """Read a dataset file; with a schema, records are validated line by line."""
    path = Path(path)
    ds = Dataset()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or obj.get("kind") not in _KEYS:
                raise DatasetFormatError(path, lineno, "missing or unknown 'kind'")
            kind = obj["kind"]
            extra = set(obj) - _KEYS[kind]
            if extra:
                raise DatasetFormatError(path, lineno, f"unknown keys {sorted(extra)}")
            try:
                if kind == "meta":
                    if obj["split"] not in SPLITS:
                        raise ValueError(f"unknown split {obj['split']!r}")
                    ds.split_tag = obj["split"]
                elif kind == "solution":
                    rec = SolutionRecord(str(obj["id"]), dict(obj.get("desc", {})), dict(obj.get("attr", {})))
                    ds.solutions.append(rec)
                elif kind == "company":
                    rec = CompanyRecord(
                        str(obj["id"]),
                        dict(obj.get("desc", {})),
                        dict(obj.get("attr", {})),
                        {k: int(v) for k, v in obj.get("categorical", {}).items()},
                        {k: float(v) for k, v in obj.get("numeric", {}).items()},
                    )
                    ds.companies.append(rec)
                else:
                    label = obj["label"]
                    if label not in (0, 1):
                        raise ValueError(f"label must be 0 or 1, got {label!r}")
                    ds.examples.append(MatchExample(str(obj["solution_id"]), str(obj["company_id"]), int(label)))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(path, lineno, str(exc)) from None
            if schema is not None and kind in ("solution", "company"):
                report = validate_record(rec, schema)
                if report.errors:
                    raise DatasetFormatError(path, lineno, "; ".join(report.errors))
    return ds


def store_schema(schema: FieldSchema, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for group in ("desc_fields_solution", "desc_fields_company", "attr_fields_solution", "attr_fields_company"):
            for name in getattr(schema, group):
                fh.write(json.dumps({"kind": "text_field", "group": group, "name": name}) + "\n")
        for name, card in schema.categorical_fields:
            fh.write(json.dumps({"kind": "categorical", "name": name, "cardinality": card}) + "\n")
        for name in schema.numeric_fields:
            fh.write(json.dumps({"kind": "numeric", "name": name}) + "\n")


def load_schema(path) -> FieldSchema:
    path = Path(path)
    groups: dict[str, list[str]] = {
        "desc_fields_solution": [],
        "desc_fields_company": [],
        "attr_fields_solution": [],
        "attr_fields_company": [],
    }
    categorical: list[tuple[str, int]] = []
    numeric: list[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                kind = obj["kind"]
                if kind == "text_field":
                    groups[obj["group"]].append(obj["name"])
                elif kind == "categorical":
                    categorical.append((obj["name"], int(obj["cardinality"])))
                elif kind == "numeric":
                    numeric.append(obj["name"])
                else:
                    raise ValueError(f"unknown kind {kind!r}")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(path, lineno, str(exc)) from None
    return FieldSchema(
        tuple(groups["desc_fields_solution"]),
        tuple(groups["desc_fields_company"]),
        tuple(groups["attr_fields_solution"]),
        tuple(groups["attr_fields_company"]),
        tuple(categorical),
        tuple(numeric),
    )


def positive_pairs(examples: Iterable[MatchExample]) -> list[tuple[str, str]]:
    return [(e.solution_id, e.company_id) for e in examples if e.label == 1]
