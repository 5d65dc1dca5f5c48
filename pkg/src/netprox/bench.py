"""Scaling benchmark: Huber node losses with network-lasso edges on a 3-regular graph."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from . import atoms as A
from .engine import StoppingCriteria, solve
from .errors import OddNodeCount
from .graph import ProblemGraph

EDGE_WEIGHT = 0.1
HUBER_THRESHOLD = 1.0


def random_regular_graph(n: int, rng: np.random.Generator, degree: int = 3, max_tries: int = 10_000) -> List[Tuple[int, int]]:
    """Sample a simple ``degree``-regular graph with the pairing model.

    Stubs are shuffled and paired; pairings with self-loops or repeated
    edges are rejected and redrawn.  Returns sorted ``(j, k)`` pairs, j < k.
    """
    if n * degree % 2:
        raise OddNodeCount(f"no {degree}-regular graph on {n} nodes")
    if n <= degree:
        raise ValueError(f"need more than {degree} nodes, got {n}")
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(max_tries):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        pairs.sort(axis=1)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        keys = pairs[:, 0].astype(np.int64) * n + pairs[:, 1]
        if len(np.unique(keys)) != len(keys):
            continue
        order = np.argsort(keys)
        return [(int(j), int(k)) for j, k in pairs[order]]
    raise RuntimeError("pairing model did not produce a simple graph")


def benchmark_problem(nodes: int, dim: int, seed: int) -> ProblemGraph:
    if nodes % 2:
        raise OddNodeCount(f"3-regular graphs need an even node count, got {nodes}")
    if nodes < 4:
        raise ValueError(f"need at least 4 nodes, got {nodes}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    edges = random_regular_graph(nodes, rng)
    data = rng.uniform(-10.0, 10.0, size=(nodes, dim))
    g = ProblemGraph()
    g.add_node_objectives(
        f"huber(x - a, {HUBER_THRESHOLD!r})", {i: {"a": data[i]} for i in range(nodes)}
    )
    for j, k in edges:
        g.add_edge(j, k)
    g.add_edge_objectives(f"netlasso({EDGE_WEIGHT!r})")
    return g


@dataclass
class BenchmarkReport:
    nodes: int
    dim: int
    unknowns: int
    edges: int
    seed: int
    threads: int
    status: str
    iters: int
    objective: float
    build_seconds: float
    solve_seconds: float

    FIELDS = (
        "nodes", "dim", "unknowns", "edges", "seed", "threads",
        "status", "iters", "objective", "build_seconds", "solve_seconds",
    )

    def row(self) -> list:
        d = asdict(self)
        return [d[name] for name in self.FIELDS]


def benchmark(nodes: int, dim: int, seed: int = 0, threads: int = 1, criteria=None) -> BenchmarkReport:
    t0 = time.perf_counter()
    g = benchmark_problem(nodes, dim, seed)
    t1 = time.perf_counter()
    result = solve(g, criteria or StoppingCriteria(), threads=threads)
    t2 = time.perf_counter()
    return BenchmarkReport(
        nodes=nodes,
        dim=dim,
        unknowns=g.size,
        edges=len(g.edges),
        seed=seed,
        threads=threads,
        status=result.status.value,
        iters=result.iters,
        objective=result.objective,
        build_seconds=t1 - t0,
        solve_seconds=t2 - t1,
    )
