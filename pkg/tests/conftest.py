import random

import pytest

from trojanscope.benchmarks import c17, uart
from trojanscope.hypergraph import build_hypergraph
from trojanscope.library import CellLibrary


@pytest.fixture(scope="session")
def lib():
    return CellLibrary.default()


@pytest.fixture(scope="session")
def c17_net(lib):
    return c17(lib)


@pytest.fixture(scope="session")
def uart_net(lib):
    return uart(lib)


@pytest.fixture(scope="session")
def uart_h(uart_net):
    return build_hypergraph(uart_net)


@pytest.fixture
def rng():
    return random.Random(1234)
