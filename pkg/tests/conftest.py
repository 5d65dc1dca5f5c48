import numpy as np
import pytest

import netprox as nx


def two_node_graph():
    """min x1^2 s.t. x1 <= 0, plus |x2 + 3|, plus (x1 - x2)^2."""
    g = nx.ProblemGraph()
    g.add_node(1, 1, [nx.square()], box=(None, 0.0))
    g.add_node(2, 1, [nx.norm1(a=-3.0)])
    g.add_edge(1, 2, [nx.sq_diff(1.0)])
    return g


def two_node_objective(x1, x2):
    return x1**2 + np.abs(x2 + 3.0) + (x1 - x2) ** 2


def quadratic_instance(seed, nodes=100, dim=10):
    from netprox.bench import random_regular_graph

    rng = np.random.default_rng(seed)
    g = nx.ProblemGraph()
    for i in range(nodes):
        g.add_node(i, dim, [nx.sum_squares(rng.normal(size=dim), w=rng.uniform(0.5, 2.0))])
    for j, k in random_regular_graph(nodes, rng):
        g.add_edge(j, k, [nx.sq_diff(rng.uniform(0.1, 1.0))])
    return g


@pytest.fixture
def two_node():
    return two_node_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
