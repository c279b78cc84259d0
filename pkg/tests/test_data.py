import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldmatch.data import (
    CompanyRecord, Dataset, DatasetFormatError, MatchExample, SamplingError, SolutionRecord, build_examples,
    load_dataset, load_schema, split_dataset, store_dataset, store_schema, validate_record,
)

from conftest import SMALL_SCHEMA, make_company, make_solution


class TestValidateRecord:
    def test_absent_text_field_is_missing_not_error(self):
        c = make_company(attr={"first_industry": ["education"], "copyright": ["x"]})
        report = validate_record(c, SMALL_SCHEMA)
        assert report.missing == ["second_industry"]
        assert report.errors == []
        assert report.ok

    def test_complete_record_gives_empty_report(self):
        assert not validate_record(make_company(), SMALL_SCHEMA)
        assert not validate_record(make_solution(), SMALL_SCHEMA)

    def test_categorical_index_equal_to_cardinality_is_out_of_range(self):
        report = validate_record(make_company(categorical={"status": 3, "listed": 0}), SMALL_SCHEMA)
        assert len(report.errors) == 1 and "out-of-range" in report.errors[0]

    def test_unknown_field_and_nan(self):
        c = make_company(numeric={"app_count": math.nan, "registered_capital": 1.0})
        c.desc["slogan"] = "x"
        errors = validate_record(c, SMALL_SCHEMA).errors
        assert any("slogan" in e for e in errors)
        assert any("non-finite" in e for e in errors)

    def test_never_raises_on_odd_input(self):
        report = validate_record(CompanyRecord("", {}, {}, {}, {}), SMALL_SCHEMA)
        assert not report.ok


class TestBuildExamples:
    def test_table_two_arithmetic(self):
        # 9,703 distinct positives over 1,000 solutions, 4 negatives each
        companies = [f"C{i}" for i in range(300)]
        positives = [(f"S{i % 1000}", f"C{i // 1000}") for i in range(9703)]
        ex = build_examples(positives, companies, 4, seed=0)
        assert sum(e.label == 0 for e in ex) == 38812
        assert len(ex) == 48515

    def test_one_positive_no_negatives(self):
        assert build_examples([("S", "C1")], ["C1", "C2"], 0, 0) == [MatchExample("S", "C1", 1)]

    def test_deterministic(self):
        pos = [("S1", "C1"), ("S1", "C2"), ("S2", "C3")]
        comps = [f"C{i}" for i in range(20)]
        assert build_examples(pos, comps, 3, 5) == build_examples(pos, comps, 3, 5)

    def test_negatives_never_positive_and_never_repeat(self):
        pos = [("S1", f"C{i}") for i in range(5)] + [("S2", "C0")]
        comps = [f"C{i}" for i in range(30)]
        ex = build_examples(pos, comps, 4, 1)
        for sid in ("S1", "S2"):
            p = {e.company_id for e in ex if e.solution_id == sid and e.label}
            n = [e.company_id for e in ex if e.solution_id == sid and not e.label]
            assert not p & set(n)
            assert len(n) == len(set(n))

    def test_too_few_companies(self):
        with pytest.raises(SamplingError):
            build_examples([("S", "C1")], ["C1", "C2", "C3"], 4, 0)


class TestSplit:
    def _examples(self, n_pos, negs=2):
        comps = [f"C{i}" for i in range(200)]
        return build_examples([("S1", f"C{i}") for i in range(n_pos)], comps, negs, 0)

    def test_partition(self):
        ex = self._examples(40)
        parts = split_dataset(ex, (0.7, 0.1, 0.2), seed=3)
        flat = [e for p in parts for e in p]
        assert sorted(flat, key=repr) == sorted(ex, key=repr)
        assert [len([e for e in p if e.label]) for p in parts] == [28, 4, 8]

    def test_negatives_follow_their_positive(self):
        ex = self._examples(10, 3)
        for part in split_dataset(ex, seed=1):
            assert len(part) % 4 == 0
            assert all(part[i].label == 1 for i in range(0, len(part), 4))

    def test_table_two_proportions(self):
        # 13,861 positive groups reproduce the published 9,703 / 1,386 / 2,772 split
        n = 13861
        assert (round(0.7 * n), round(0.1 * n), n - round(0.7 * n) - round(0.1 * n)) == (9703, 1386, 2772)
        assert 2772 * 5 == 13860
        assert 13860 / 69305 == pytest.approx(0.2, abs=1e-4)

    def test_all_train(self):
        ex = self._examples(5)
        tr, va, te = split_dataset(ex, (1.0, 0.0, 0.0), seed=0)
        assert tr == ex and va == [] and te == []

    def test_deterministic(self):
        ex = self._examples(10)
        assert split_dataset(ex, seed=7) == split_dataset(ex, seed=7)

    def test_errors(self):
        with pytest.raises(ValueError):
            split_dataset(self._examples(2), seed=0)
        with pytest.raises(ValueError):
            split_dataset(self._examples(5), (0.5, 0.5, 0.5), seed=0)


_text = st.text(alphabet="abc xyz", min_size=1, max_size=12)
_company = st.builds(
    CompanyRecord,
    id=st.from_regex(r"C[0-9]{1,4}", fullmatch=True),
    desc=st.dictionaries(st.sampled_from(["name", "introduction", "business_scope"]), _text),
    attr=st.dictionaries(st.sampled_from(["first_industry", "copyright"]), st.lists(_text, max_size=3)),
    categorical=st.fixed_dictionaries({"status": st.integers(0, 2), "listed": st.integers(0, 1)}),
    numeric=st.fixed_dictionaries({"app_count": st.floats(-1e6, 1e6), "registered_capital": st.floats(0, 1e9)}),
)


class TestStorage:
    @settings(max_examples=30, deadline=None)
    @given(companies=st.lists(_company, max_size=4), labels=st.lists(st.integers(0, 1), max_size=5))
    def test_round_trip(self, tmp_path_factory, companies, labels):
        path = tmp_path_factory.mktemp("ds") / "d.jsonl"
        ds = Dataset([make_solution()], companies, [MatchExample("S1", f"C{i}", y) for i, y in enumerate(labels)], "test")
        store_dataset(ds, path)
        assert load_dataset(path) == ds

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_dataset(path) == Dataset()

    def test_unknown_field_names_its_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"kind": "example", "solution_id": "S", "company_id": "C", "label": 1})
        bad = json.dumps({"kind": "example", "solution_id": "S", "company_id": "C", "label": 1, "weight": 2})
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(DatasetFormatError, match=r":2:.*weight"):
            load_dataset(path)

    def test_schema_validation_on_load(self, tmp_path):
        path = tmp_path / "d.jsonl"
        store_dataset(Dataset([], [make_company(categorical={"status": 9, "listed": 0})]), path)
        with pytest.raises(DatasetFormatError, match="out-of-range"):
            load_dataset(path, SMALL_SCHEMA)

    def test_schema_round_trip(self, tmp_path):
        store_schema(SMALL_SCHEMA, tmp_path / "schema.txt")
        assert load_schema(tmp_path / "schema.txt") == SMALL_SCHEMA

    def test_solution_record_round_trip(self, tmp_path):
        s = SolutionRecord("S9", {"name": "x"}, {"industry": []})
        store_dataset(Dataset([s]), tmp_path / "s.jsonl")
        assert load_dataset(tmp_path / "s.jsonl").solutions == [s]
