import sys
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import strategies as st

from byzlink.graph import DiGraph

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(str(resources.files("byzlink") / "fixtures"))


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load_fixture(name: str) -> DiGraph:
    return DiGraph.load(fixture_path(name + ".json"))


@pytest.fixture
def fig1():
    return load_fixture("fig1")


@pytest.fixture
def chain3():
    return load_fixture("chain3")


@pytest.fixture
def twin_k4():
    return load_fixture("twin_k4")


@st.composite
def digraphs(draw, min_n=2, max_n=6):
    n = draw(st.integers(min_n, max_n))
    pairs = [(j, i) for j in range(n) for i in range(n) if j != i]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return DiGraph(n, [e for e, k in zip(pairs, keep) if k])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
