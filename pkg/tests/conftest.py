import pathlib

import pytest
from hypothesis import settings

from ragwb.corpus import parse_corpus
from ragwb.tfidf import build_index

FIXTURES = pathlib.Path(__file__).parent / "fixtures"
GOLDEN = pathlib.Path(__file__).parent / "golden"

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def corpus5_path() -> pathlib.Path:
    return FIXTURES / "corpus5.json"


@pytest.fixture(scope="session")
def corpus50_path() -> pathlib.Path:
    return FIXTURES / "corpus50.json"


@pytest.fixture()
def corpus5(corpus5_path):
    return parse_corpus(corpus5_path.read_bytes())


@pytest.fixture()
def corpus50(corpus50_path):
    return parse_corpus(corpus50_path.read_bytes(), warnings=[])


@pytest.fixture()
def index5(corpus5):
    docs = [(uri, corpus5[uri].raw_content) for uri in sorted(corpus5)]
    return build_index(docs)
