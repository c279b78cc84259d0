import numpy as np
import pytest
from scipy import stats
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score

from fieldmatch.data import Dataset, build_examples, store_dataset, validate_record
from fieldmatch.synth import (
    N_BANDS, SCHEMA, SynthConfig, band_compatibility, generate_corpus, inject_missingness, match_propensity,
    overlap_and_compat,
)

from conftest import make_company


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_companies=0)
    with pytest.raises(ValueError):
        SynthConfig(text_signal_strength=1.5)
    with pytest.raises(ValueError):
        generate_corpus(SynthConfig(n_companies=10, positives_per_solution=11))


def test_byte_identical_corpora(tmp_path):
    cfg = SynthConfig(n_solutions=4, n_companies=80, positives_per_solution=5, seed=11)
    for name in ("a", "b"):
        c = generate_corpus(cfg)
        store_dataset(Dataset(c.solutions, c.companies), tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_records_validate_before_missingness():
    c = generate_corpus(SynthConfig(n_solutions=5, n_companies=200, positives_per_solution=5,
                                    missing_field_rate=0, missing_token_rate=0, seed=2))
    for rec in c.solutions + c.companies:
        report = validate_record(rec, SCHEMA)
        assert not report, (rec.id, report)


def test_company_names_are_unique_two_part_strings(small_corpus):
    names = [c.desc.get("name") for c in small_corpus.companies if "name" in c.desc]
    assert len(names) == len(set(names))
    assert all(len(n.split()) <= 2 for n in names)


def test_scale_features_follow_band():
    c = generate_corpus(SynthConfig(n_companies=600, positives_per_solution=5, seed=4))
    bands = c.company_latent.band
    employees = np.array([x.numeric["employees"] for x in c.companies])
    medians = [np.median(employees[bands == b]) for b in range(N_BANDS)]
    assert medians == sorted(medians)


def test_null_signal_positives_are_uniform():
    cfg = SynthConfig(n_solutions=40, n_companies=300, positives_per_solution=30,
                      text_signal_strength=0, scale_signal_strength=0, seed=5)
    c = generate_corpus(cfg)
    overlap, compat = overlap_and_compat(c, c.positives)
    all_pairs = [(s.id, x.id) for s in c.solutions for x in c.companies]
    o_all, c_all = overlap_and_compat(c, all_pairs)
    # positives look like the population on both latent axes
    assert stats.ks_2samp(overlap, o_all).pvalue > 0.01
    assert stats.ks_2samp(compat, c_all).pvalue > 0.01


def test_logistic_probe_separates_positives():
    cfg = SynthConfig(n_solutions=20, n_companies=2000, text_signal_strength=0.9, scale_signal_strength=0.6, seed=0)
    c = generate_corpus(cfg)
    ex = build_examples(c.positives, c.companies, 4, seed=1)
    X = np.column_stack(overlap_and_compat(c, [(e.solution_id, e.company_id) for e in ex]))
    y = np.array([e.label for e in ex])
    idx = np.random.default_rng(0).permutation(len(y))
    train, test = idx[: len(y) // 2], idx[len(y) // 2 :]
    probe = LogisticRegression().fit(X[train], y[train])
    auc = roc_auc_score(y[test], probe.predict_proba(X[test])[:, 1])
    assert auc > 0.8


def test_propensity_monotone_in_each_strength():
    c = generate_corpus(SynthConfig(n_solutions=10, n_companies=300, positives_per_solution=5, seed=6))
    overlap = c.solution_latent.industry @ c.company_latent.industry.T
    compat = band_compatibility(c.solution_latent.band[:, None], c.company_latent.band[None, :])

    def expected(values, t, s):
        w = match_propensity(overlap, compat, t, s)
        return float(np.mean((w * values).sum(1) / w.sum(1)))

    grid = (0.0, 0.5, 1.0)
    for s in grid:
        row = [expected(overlap, t, s) for t in grid]
        assert row == sorted(row)
    for t in grid:
        row = [expected(compat, t, s) for s in grid]
        assert row == sorted(row)


class TestMissingness:
    def test_zero_rates_are_identity(self, small_corpus):
        assert inject_missingness(small_corpus.companies, 0, 0, 1) == small_corpus.companies

    def test_full_field_rate_drops_every_text_field(self, small_corpus):
        out = inject_missingness(small_corpus.companies, 1.0, 0.0, 1)
        assert all(not c.desc and not c.attr for c in out)
        assert [c.numeric for c in out] == [c.numeric for c in small_corpus.companies]
        assert [c.categorical for c in out] == [c.categorical for c in small_corpus.companies]

    def test_input_not_mutated(self, small_corpus):
        before = [repr(c) for c in small_corpus.companies]
        inject_missingness(small_corpus.companies, 0.5, 0.5, 3)
        assert [repr(c) for c in small_corpus.companies] == before

    def test_dropped_count_within_three_sigma(self):
        # 200 companies x 5 text fields = 1,000 fields
        comps = [make_company(f"C{i}", desc={"name": "a", "introduction": "b", "business_scope": "c"},
                              attr={"first_industry": ["d"], "second_industry": ["e"]}) for i in range(200)]
        out = inject_missingness(comps, 0.3, 0.0, 9)
        dropped = sum(5 - len(c.desc) - len(c.attr) for c in out)
        mean, sd = 1000 * 0.3, np.sqrt(1000 * 0.3 * 0.7)
        assert abs(dropped - mean) <= 3 * sd

    def test_deterministic(self, small_corpus):
        a = inject_missingness(small_corpus.companies, 0.2, 0.1, 4)
        b = inject_missingness(small_corpus.companies, 0.2, 0.1, 4)
        assert a == b
