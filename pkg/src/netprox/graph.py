"""Problem graph: nodes carrying variables and objectives, edges carrying couplings."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import atoms as A
from .atoms import AtomSpec, EdgeAtomSpec
from .errors import (
    DimensionMismatch,
    DuplicateEdge,
    DuplicateNode,
    SelfLoop,
    UnknownEdge,
    UnknownEndpoint,
    UnknownNode,
)


@dataclass
class NodeSpec:
    id: int
    dim: int
    objective: List[AtomSpec] = field(default_factory=list)
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        self.id = _node_id(self.id)
        self.dim = int(self.dim)
        if self.dim < 1:
            raise DimensionMismatch(f"node {self.id}: dim must be >= 1, got {self.dim}")
        self.objective = list(self.objective)
        A.check_objective(self.objective, self.box, self.dim)
        self.box = A.normalize_box(self.box, self.dim)


@dataclass
class EdgeSpec:
    j: int
    k: int
    objective: List[EdgeAtomSpec] = field(default_factory=list)

    def __post_init__(self):
        self.j, self.k = _node_id(self.j), _node_id(self.k)
        if self.j == self.k:
            raise SelfLoop(f"self-loop on node {self.j}")
        if self.j > self.k:
            self.j, self.k = self.k, self.j
        self.objective = list(self.objective)

    @property
    def key(self) -> Tuple[int, int]:
        return self.j, self.k

    @property
    def coupling(self) -> bool:
        """True if the objective is not identically zero."""
        return any(not atom.is_zero for atom in self.objective)


def _node_id(i) -> int:
    if isinstance(i, (bool, np.bool_)) or int(i) != i or int(i) < 0:
        raise ValueError(f"node ids must be nonnegative integers, got {i!r}")
    return int(i)


def edge_key(j, k) -> Tuple[int, int]:
    j, k = int(j), int(k)
    return (j, k) if j < k else (k, j)


class ProblemGraph:
    """Undirected graph of node objectives ``f_i`` and edge couplings ``g_jk``.

    Construction mutates the graph in place.  Neighbor lists are kept sorted
    so iteration order is deterministic.

    >>> g = ProblemGraph()
    >>> g.add_node(1, 1, [A.square()], box=(None, 0.0))
    >>> g.add_node(2, 1, [A.norm1(a=-3.0)])
    >>> g.add_edge(1, 2, [A.sq_diff(1.0)])
    >>> g.neighbors(1)
    [2]
    """

    def __init__(self):
        self.nodes: Dict[int, NodeSpec] = {}
        self.edges: Dict[Tuple[int, int], EdgeSpec] = {}
        self._adj: Dict[int, List[int]] = {}

    def __repr__(self):
        return f"ProblemGraph(nodes={len(self.nodes)}, edges={len(self.edges)})"

    # Construction.

    def add_node(self, node, dim: Optional[int] = None, objective: Sequence[AtomSpec] = (), box=None):
        """Add a node, given either a :class:`NodeSpec` or its fields."""
        spec = node if isinstance(node, NodeSpec) else NodeSpec(node, dim, list(objective), box)
        if spec.id in self.nodes:
            raise DuplicateNode(f"node {spec.id} already exists")
        self.nodes[spec.id] = spec
        self._adj[spec.id] = []

    def add_edge(self, edge, k: Optional[int] = None, objective: Sequence[EdgeAtomSpec] = ()):
        """Add an undirected edge, given either an :class:`EdgeSpec` or ``(j, k, objective)``."""
        spec = edge if isinstance(edge, EdgeSpec) else EdgeSpec(edge, k, list(objective))
        for end in spec.key:
            if end not in self.nodes:
                raise UnknownEndpoint(f"edge {spec.key}: node {end} does not exist")
        if spec.key in self.edges:
            raise DuplicateEdge(f"edge {spec.key} already exists")
        self._check_edge_dims(spec)
        self.edges[spec.key] = spec
        bisect.insort(self._adj[spec.j], spec.k)
        bisect.insort(self._adj[spec.k], spec.j)

    def _check_edge_dims(self, spec: EdgeSpec):
        dj, dk = self.nodes[spec.j].dim, self.nodes[spec.k].dim
        if dj != dk and spec.coupling:
            raise DimensionMismatch(
                f"edge {spec.key}: difference atom across dims {dj} and {dk}"
            )

    def set_node_objective(self, i: int, objective: Sequence[AtomSpec], box=None):
        node = self.node(i)
        self.nodes[i] = NodeSpec(i, node.dim, list(objective), box)

    def set_edge_objective(self, j: int, k: int, objective: Sequence[EdgeAtomSpec]):
        key = edge_key(j, k)
        if key not in self.edges:
            raise UnknownEdge(f"edge {key} does not exist")
        spec = EdgeSpec(key[0], key[1], list(objective))
        self._check_edge_dims(spec)
        self.edges[key] = spec

    def add_node_objectives(self, template, data: Mapping[int, Mapping]):
        """Bulk-load node objectives from a template and one data row per node.

        ``template`` is a template string or a parsed node template.  Rows for
        ids not yet in the graph create new nodes, with the dimension taken
        from the first vector-valued column the template binds.
        """
        from . import dsl

        if isinstance(template, str):
            template = dsl.parse_node_template(template)
        specs = {}
        for i in sorted(data):
            row = data[i]
            dim = self.nodes[i].dim if i in self.nodes else dsl.infer_dim(template, row)
            specs[i] = (dim, *dsl.instantiate(template, row, dim))
        for i, (dim, objective, box) in specs.items():
            if i in self.nodes:
                self.set_node_objective(i, objective, box)
            else:
                self.add_node(i, dim, objective, box)

    def add_edge_objectives(
        self,
        template,
        edge_data: Optional[Mapping[Tuple[int, int], Mapping]] = None,
        params: Optional[Mapping] = None,
    ):
        """Bulk-load edge objectives.

        Without ``edge_data`` every edge gets the template; with it, only the
        listed edges do.  ``params`` supplies values shared by all edges and
        is overridden by per-edge columns.
        """
        from . import dsl

        if isinstance(template, str):
            template = dsl.parse_edge_template(template)
        shared = dict(params or {})
        if edge_data is None:
            rows = {key: shared for key in self.edges}
        else:
            rows = {edge_key(*key): {**shared, **row} for key, row in edge_data.items()}
        for key in sorted(rows):
            if key not in self.edges:
                raise UnknownEdge(f"edge {key} does not exist")
        atoms = {key: dsl.instantiate_edge(template, rows[key]) for key in sorted(rows)}
        for key, objective in atoms.items():
            self.set_edge_objective(*key, objective)

    # Queries.

    def node(self, i: int) -> NodeSpec:
        try:
            return self.nodes[i]
        except KeyError:
            raise UnknownNode(f"node {i} does not exist") from None

    def neighbors(self, i: int) -> List[int]:
        self.node(i)
        return list(self._adj[i])

    def degree(self, i: int) -> int:
        self.node(i)
        return len(self._adj[i])

    def node_ids(self) -> List[int]:
        return sorted(self.nodes)

    def edge_keys(self) -> List[Tuple[int, int]]:
        return sorted(self.edges)

    @property
    def size(self) -> int:
        """Total number of scalar unknowns."""
        return sum(node.dim for node in self.nodes.values())

    def objective(self, x: Mapping[int, np.ndarray]) -> float:
        """Total objective at node values ``x``; box constraints are not checked."""
        total = 0.0
        for i in self.node_ids():
            total += A.eval_node_objective(self.nodes[i].objective, x[i])
        for key in self.edge_keys():
            edge = self.edges[key]
            total += A.eval_edge_objective(edge.objective, x[key[0]], x[key[1]])
        return total

    def stack(self, x: Mapping[int, np.ndarray]) -> np.ndarray:
        """Concatenate node values in ascending id order."""
        if not self.nodes:
            return np.zeros(0)
        return np.concatenate([np.asarray(x[i], dtype=float) for i in self.node_ids()])

    def unstack(self, vec) -> Dict[int, np.ndarray]:
        out, pos = {}, 0
        for i in self.node_ids():
            d = self.nodes[i].dim
            out[i] = np.array(vec[pos:pos + d], dtype=float)
            pos += d
        return out

