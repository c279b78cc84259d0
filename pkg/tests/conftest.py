import numpy as np
import pytest

from fieldmatch.data import CompanyRecord, FieldSchema, SolutionRecord
from fieldmatch.synth import SynthConfig, generate_corpus
from fieldmatch.textseq import build_vocab, record_texts

SMALL_SCHEMA = FieldSchema(
    desc_fields_solution=("name", "introduction"),
    desc_fields_company=("name", "introduction", "business_scope"),
    attr_fields_solution=("industry", "product_category"),
    attr_fields_company=("first_industry", "second_industry", "copyright"),
    categorical_fields=(("status", 3), ("listed", 2)),
    numeric_fields=("app_count", "registered_capital"),
)


def make_company(cid="C1", **kw):
    base = dict(
        desc={"name": "acme cloud", "introduction": "acme builds tools", "business_scope": "software services"},
        attr={"first_industry": ["education"], "second_industry": ["training"], "copyright": ["acme suite"]},
        categorical={"status": 1, "listed": 0},
        numeric={"app_count": 3.0, "registered_capital": 12.5},
    )
    base.update(kw)
    return CompanyRecord(cid, **base)


def make_solution(sid="S1", **kw):
    base = dict(
        desc={"name": "learning cloud", "introduction": "a platform for schools"},
        attr={"industry": ["education"], "product_category": ["skills training"]},
    )
    base.update(kw)
    return SolutionRecord(sid, **base)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SynthConfig(n_solutions=6, n_companies=120, n_industries=3, vocab_seed_words=60,
                                       positives_per_solution=8, seed=3))


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    return build_vocab(record_texts(small_corpus.solutions + small_corpus.companies))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
