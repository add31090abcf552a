import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgtopo.graph import build_indexes, load_entity_types, load_triples

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def toy_path() -> Path:
    return DATA_DIR / "toy_graph.tsv"


@pytest.fixture(scope="session")
def toy_types_path() -> Path:
    return DATA_DIR / "toy_types.tsv"


@pytest.fixture(scope="session")
def toy_store(toy_path, toy_types_path):
    store = load_triples(toy_path)
    store.entity_types = load_entity_types(toy_types_path, store)
    return store


@pytest.fixture(scope="session")
def toy_graph(toy_store):
    return build_indexes(toy_store)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
