import numpy as np
import pytest
from hypothesis import settings

from jordan_source.graph import Graph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def labelled_path(labels="abcde") -> Graph:
    return Graph.from_edges(len(labels), [(i, i + 1) for i in range(len(labels) - 1)], list(labels))


@pytest.fixture
def path5():
    return labelled_path()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
