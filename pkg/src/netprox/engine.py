"""ADMM over the problem graph.

Every edge ``(j, k)`` gets two copies ``z_jk`` and ``z_kj`` of its endpoint
variables, tied to the node variables by ``x_j = z_jk`` and ``x_k = z_kj``.
One iteration is

1. node step:   ``x_i = prox_{f_i, rho*deg(i)}(mean_j (z_ij - u_ij))``
2. edge step:   ``(z_jk, z_kj) = prox_{g_jk, rho}(x_j + u_jk, x_k + u_kj)``
3. dual step:   ``u_ij += x_i - z_ij``

All iterates live in flat arrays.  Directed endpoints are laid out in
ascending ``(node id, neighbor id)`` order and every reduction runs in that
order, so results do not depend on how many worker threads split a phase.
"""

from __future__ import annotations

import enum
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from . import atoms as A
from .atoms import EdgeKind, NodeKind
from .errors import InvalidRho, WarmStartDimMismatch
from .graph import ProblemGraph


class Status(enum.Enum):
    CONVERGED = "CONVERGED"
    MAX_ITERS = "MAX_ITERS"


@dataclass(frozen=True)
class StoppingCriteria:
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    max_iters: int = 1000

    def __post_init__(self):
        if not (self.eps_abs > 0 and self.eps_rel > 0 and self.max_iters > 0):
            raise ValueError("stopping tolerances and iteration limit must be positive")


class Residuals(NamedTuple):
    primal: float
    dual: float
    eps_pri: float
    eps_dual: float

    @property
    def converged(self) -> bool:
        return self.primal <= self.eps_pri and self.dual <= self.eps_dual


class IterationRecord(NamedTuple):
    primal: float
    dual: float
    eps_pri: float
    eps_dual: float
    rho: float


def _ranges(starts, lengths) -> np.ndarray:
    """Concatenation of ``arange(s, s + n)`` for each pair, vectorized."""
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    return np.repeat(starts - (ends - lengths), lengths) + np.arange(total)


def _split(weights, nblocks: int) -> List[Tuple[int, int]]:
    """Cut ``range(len(weights))`` into contiguous pieces of similar total weight."""
    n = len(weights)
    nblocks = max(1, min(nblocks, n))
    cum = np.cumsum(weights, dtype=float)
    total = cum[-1] if n else 0.0
    cuts = [0]
    for b in range(1, nblocks):
        cut = int(np.searchsorted(cum, total * b / nblocks, side="left")) + 1
        cuts.append(min(max(cut, cuts[-1]), n))
    cuts.append(n)
    return [(lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:]) if hi > lo] or [(0, n)]


@dataclass
class _Group:
    idx: np.ndarray
    w: np.ndarray
    a: Optional[np.ndarray] = None
    extra: Optional[np.ndarray] = None  # Huber threshold
    starts: Optional[np.ndarray] = None  # segment starts within idx (norm-based atoms)
    lengths: Optional[np.ndarray] = None


@dataclass
class _NodeBlock:
    xs: int
    xe: int
    es: int
    ee: int
    src: np.ndarray
    deg: np.ndarray
    groups: Dict[NodeKind, _Group]
    lin_idx: np.ndarray
    lin: np.ndarray
    box_idx: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    iso_idx: np.ndarray
    iso_val: np.ndarray


@dataclass
class _EdgeBlock:
    groups: Dict[EdgeKind, Tuple[np.ndarray, np.ndarray, _Group]]


class Layout:
    """Flat indexing of a :class:`ProblemGraph` for the ADMM engine.

    Edges whose objective is identically zero (empty, ZERO, or zero weight)
    couple nothing; with ``prune_zero_edges`` they get no variable copies
    and their endpoints may end up isolated.
    """

    def __init__(self, graph: ProblemGraph, prune_zero_edges: bool = True, nblocks: int = 1):
        self.graph = graph
        self.prune_zero_edges = prune_zero_edges
        ids = graph.node_ids()
        self.ids = ids
        self.index = {i: n for n, i in enumerate(ids)}
        self.dims = np.array([graph.nodes[i].dim for i in ids], dtype=np.int64)
        self.x_off = np.concatenate([[0], np.cumsum(self.dims)]).astype(np.int64)
        self.p = int(self.x_off[-1])

        edges = {}
        for key in graph.edge_keys():
            edge = graph.edges[key]
            if edge.coupling or not prune_zero_edges:
                edges[key] = A._edge_main(edge.objective)
        self.edges = edges

        nbrs: Dict[int, List[int]] = {i: [] for i in ids}
        for j, k in edges:
            nbrs[j].append(k)
            nbrs[k].append(j)
        self.endpoints: List[Tuple[int, int]] = []
        for i in ids:
            for j in sorted(nbrs[i]):
                self.endpoints.append((i, j))
        self.ep_index = {e: n for n, e in enumerate(self.endpoints)}
        self.degree = np.array([len(nbrs[i]) for i in ids], dtype=np.int64)
        ep_node = np.array([self.index[i] for i, _ in self.endpoints], dtype=np.int64)
        ep_dims = self.dims[ep_node] if len(ep_node) else np.zeros(0, dtype=np.int64)
        self.ep_off = np.concatenate([[0], np.cumsum(ep_dims)]).astype(np.int64)
        self.P = int(self.ep_off[-1])
        self.ep_src = _ranges(self.x_off[ep_node] if len(ep_node) else [], ep_dims)

        self._compile_nodes()
        self.set_blocks(nblocks)

    # Per-entry parameters, computed once.

    def _compile_nodes(self):
        p = self.p
        self.kind = np.full(p, -1, dtype=np.int64)
        self.w = np.zeros(p)
        self.a = np.zeros(p)
        self.M = np.ones(p)
        self.lin = np.zeros(p)
        self.lo = np.full(p, -np.inf)
        self.hi = np.full(p, np.inf)
        self.has_box = np.zeros(p, dtype=bool)
        self.isolated = np.zeros(p, dtype=bool)
        self.iso_val = np.zeros(p)
        self.kinds = list(NodeKind)
        for n, i in enumerate(self.ids):
            node = self.graph.nodes[i]
            s = slice(self.x_off[n], self.x_off[n + 1])
            main, lin = A.split_objective(node.objective)
            if main is not None:
                self.kind[s] = self.kinds.index(main.kind)
                self.w[s] = main.weight
                self.a[s] = main.shift
                if main.kind is NodeKind.HUBER:
                    self.M[s] = main.threshold
            if lin is not None:
                self.lin[s] = lin
            if node.box is not None:
                self.lo[s], self.hi[s] = node.box
                self.has_box[s] = True
            if self.degree[n] == 0:
                self.isolated[s] = True
                self.iso_val[s] = A.argmin_node(node.objective, node.box, node.dim)

    def set_blocks(self, nblocks: int):
        """Partition node and edge work into ``nblocks`` contiguous pieces."""
        n = len(self.ids)
        ep_per_node = np.diff(self.x_off) * np.maximum(self.degree, 1) if n else np.zeros(0)
        self.node_blocks = [self._node_block(lo, hi) for lo, hi in _split(ep_per_node, nblocks)] if n else []
        keys = [key for key, main in self.edges.items() if main is not None]
        sizes = [self.graph.nodes[j].dim for j, _ in keys]
        self.edge_blocks = [self._edge_block(keys[lo:hi]) for lo, hi in _split(sizes, nblocks)] if keys else []

    def _node_block(self, lo: int, hi: int) -> _NodeBlock:
        xs, xe = int(self.x_off[lo]), int(self.x_off[hi])
        first = sum(int(d) for d in self.degree[:lo])
        last = first + sum(int(d) for d in self.degree[lo:hi])
        es, ee = int(self.ep_off[first]), int(self.ep_off[last])
        sl = slice(xs, xe)
        deg_node = self.degree[lo:hi]
        dims = self.dims[lo:hi]
        deg = np.repeat(deg_node, dims).astype(float)
        kind = self.kind[sl]
        active = ~self.isolated[sl]
        groups = {}
        for code, k in enumerate(self.kinds):
            if k in (NodeKind.ZERO, NodeKind.LINEAR):
                continue
            idx = np.flatnonzero((kind == code) & active)
            if len(idx) == 0:
                continue
            g = _Group(idx, self.w[sl][idx], self.a[sl][idx])
            if k is NodeKind.HUBER:
                g.extra = self.M[sl][idx]
            if k is NodeKind.NORM2:
                sel = (self.kind[self.x_off[lo:hi]] == code) & (deg_node > 0)
                g.lengths = dims[sel]
                g.starts = np.concatenate([[0], np.cumsum(g.lengths)[:-1]]).astype(np.int64)
            groups[k] = g
        lin_idx = np.flatnonzero((self.lin[sl] != 0) & active)
        box_idx = np.flatnonzero(self.has_box[sl] & active)
        iso_idx = np.flatnonzero(~active)
        return _NodeBlock(
            xs, xe, es, ee,
            src=self.ep_src[es:ee] - xs,
            deg=deg,
            groups=groups,
            lin_idx=lin_idx,
            lin=self.lin[sl][lin_idx],
            box_idx=box_idx,
            lo=self.lo[sl][box_idx],
            hi=self.hi[sl][box_idx],
            iso_idx=iso_idx,
            iso_val=self.iso_val[sl][iso_idx],
        )

    def _edge_block(self, keys) -> _EdgeBlock:
        by_kind: Dict[EdgeKind, list] = {}
        for key in keys:
            by_kind.setdefault(self.edges[key].kind, []).append(key)
        groups = {}
        for kind, ks in by_kind.items():
            dims = np.array([self.graph.nodes[j].dim for j, _ in ks], dtype=np.int64)
            sa = [self.ep_off[self.ep_index[(j, k)]] for j, k in ks]
            sb = [self.ep_off[self.ep_index[(k, j)]] for j, k in ks]
            ia, ib = _ranges(sa, dims), _ranges(sb, dims)
            w = np.repeat([self.edges[key].weight for key in ks], dims).astype(float)
            starts = np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(np.int64)
            groups[kind] = (ia, ib, _Group(np.arange(len(ia)), w, starts=starts, lengths=dims))
        return _EdgeBlock(groups)


@dataclass
class SolverState:
    """ADMM iterates in flat form, with accessors keyed by node id."""

    layout: Layout
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    rho: float
    iter: int = 0

    def x_of(self, i: int) -> np.ndarray:
        n = self.layout.index[i]
        return self.x[self.layout.x_off[n]:self.layout.x_off[n + 1]]

    def _ep(self, arr, i, j):
        e = self.layout.ep_index[(i, j)]
        return arr[self.layout.ep_off[e]:self.layout.ep_off[e + 1]]

    def z_of(self, i: int, j: int) -> np.ndarray:
        """Copy of ``x_i`` held by edge ``(i, j)``."""
        return self._ep(self.z, i, j)

    def u_of(self, i: int, j: int) -> np.ndarray:
        return self._ep(self.u, i, j)

    def x_dict(self) -> Dict[int, np.ndarray]:
        return {i: self.x_of(i).copy() for i in self.layout.ids}

    def copy(self) -> "SolverState":
        return SolverState(self.layout, self.x.copy(), self.z.copy(), self.u.copy(), self.rho, self.iter)


def initialize(
    graph: ProblemGraph,
    rho0: float = 1.0,
    warm=None,
    prune_zero_edges: bool = True,
    nblocks: int = 1,
) -> SolverState:
    """Cold or warm starting state.

    ``warm`` is either a mapping of node id to starting value, or a previous
    :class:`SolveResult` / :class:`SolverState` on the same graph, whose
    edge copies and duals are reused as well.
    """
    rho0 = float(rho0)
    if not rho0 > 0:
        raise InvalidRho(f"rho must be positive, got {rho0}")
    layout = Layout(graph, prune_zero_edges, nblocks)
    if isinstance(warm, SolveResult):
        warm = warm.state
    if isinstance(warm, SolverState):
        if (warm.x.shape, warm.z.shape) != ((layout.p,), (layout.P,)):
            raise WarmStartDimMismatch("warm state does not match this graph")
        # Keep the unscaled dual rho*u when switching penalty.
        u = warm.u * (warm.rho / rho0)
        return SolverState(layout, warm.x.copy(), warm.z.copy(), u, rho0)
    x = np.zeros(layout.p)
    if warm is not None:
        for i, value in warm.items():
            value = np.atleast_1d(np.asarray(value, dtype=float))
            n = layout.index.get(i)
            if n is None:
                raise WarmStartDimMismatch(f"warm start names unknown node {i}")
            if value.shape != (int(layout.dims[n]),):
                raise WarmStartDimMismatch(
                    f"warm value for node {i} has shape {value.shape}, node dim is {layout.dims[n]}"
                )
            x[layout.x_off[n]:layout.x_off[n + 1]] = value
    z = x[layout.ep_src].copy()
    return SolverState(layout, x, z, np.zeros(layout.P), rho0)


def _map(pool, fn, items):
    if pool is None or len(items) <= 1:
        for item in items:
            fn(item)
    else:
        list(pool.map(fn, items))


def x_update(state: SolverState, pool: Optional[ThreadPoolExecutor] = None):
    """Node step; writes ``state.x`` in place from ``(z, u)``."""
    rho, z, u, x = state.rho, state.z, state.u, state.x

    def run(b: _NodeBlock):
        n = b.xe - b.xs
        v = np.bincount(b.src, weights=z[b.es:b.ee] - u[b.es:b.ee], minlength=n)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = v / b.deg
        sigma = rho * b.deg
        if len(b.lin_idx):
            v[b.lin_idx] -= b.lin / sigma[b.lin_idx]
        out = v.copy()
        for kind, g in b.groups.items():
            vi, si = v[g.idx], sigma[g.idx]
            if kind is NodeKind.SUM_SQUARES:
                out[g.idx] = A.prox_sum_squares(vi, si, g.w, g.a)
            elif kind is NodeKind.NORM1:
                out[g.idx] = A.prox_norm1(vi, si, g.w, g.a)
            elif kind is NodeKind.HUBER:
                out[g.idx] = A.prox_huber(vi, si, g.w, g.a, g.extra)
            else:
                d = vi - g.a
                norms = np.repeat(A.group_norms(d * d, g.starts), g.lengths)
                out[g.idx] = g.a + A.block_shrink(d, g.w / si, norms)
        if len(b.box_idx):
            out[b.box_idx] = np.clip(out[b.box_idx], b.lo, b.hi)
        out[b.iso_idx] = b.iso_val
        x[b.xs:b.xe] = out

    _map(pool, run, state.layout.node_blocks)


def z_update(state: SolverState, pool: Optional[ThreadPoolExecutor] = None) -> np.ndarray:
    """Edge step; replaces ``state.z`` and returns the previous ``z``."""
    layout, rho = state.layout, state.rho
    prev = state.z
    c = state.x[layout.ep_src] + state.u
    z = c.copy()

    def run(b: _EdgeBlock):
        for kind, (ia, ib, g) in b.groups.items():
            ca, cb = c[ia], c[ib]
            m = 0.5 * (ca + cb)
            d = ca - cb
            norms = None
            if kind is EdgeKind.NETLASSO:
                norms = np.repeat(A.group_norms(d * d, g.starts), g.lengths)
            half = 0.5 * A.edge_delta(kind, d, rho, g.w, norms)
            z[ia], z[ib] = A.conserve_pair(ca, cb, m + half, m - half)

    _map(pool, run, layout.edge_blocks)
    state.z = z
    return prev


def u_update(state: SolverState):
    state.u += state.x[state.layout.ep_src] - state.z


def _norm(v) -> float:
    return float(np.sqrt(np.sum(v * v)))


def residuals(state: SolverState, prev_z, criteria: StoppingCriteria = StoppingCriteria()) -> Residuals:
    xb = state.x[state.layout.ep_src]
    primal = _norm(xb - state.z)
    dual = state.rho * _norm(state.z - prev_z)
    root_p = np.sqrt(state.layout.P)
    eps_pri = root_p * criteria.eps_abs + criteria.eps_rel * max(_norm(xb), _norm(state.z))
    eps_dual = root_p * criteria.eps_abs + criteria.eps_rel * state.rho * _norm(state.u)
    return Residuals(primal, dual, float(eps_pri), float(eps_dual))


# Penalty policies.

def _set_rho(state: SolverState, new: float):
    # u' = (rho * u) / rho' formed in extended precision, so the only
    # rounding is the final store and rho' * u' matches rho * u to half an ulp.
    ld = np.longdouble
    state.u = (state.u.astype(ld) * ld(state.rho) / ld(new)).astype(np.float64)
    state.rho = float(new)


@dataclass(frozen=True)
class FixedRho:
    def update(self, state: SolverState, primal: float, dual: float) -> float:
        return state.rho


@dataclass(frozen=True)
class ResidualBalance:
    """Scale rho up when the primal residual dominates, down when the dual does."""

    mu: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0

    def __post_init__(self):
        if not (self.mu > 1 and self.tau_incr > 1 and self.tau_decr > 1):
            raise ValueError("mu, tau_incr and tau_decr must all exceed 1")

    def update(self, state: SolverState, primal: float, dual: float) -> float:
        if primal > self.mu * dual:
            _set_rho(state, state.rho * self.tau_incr)
        elif dual > self.mu * primal:
            _set_rho(state, state.rho / self.tau_decr)
        return state.rho


@dataclass(frozen=True)
class CustomRho:
    """User rule ``callback(iter, rho, primal, dual) -> new rho``."""

    callback: Callable[[int, float, float, float], float]

    def update(self, state: SolverState, primal: float, dual: float) -> float:
        new = float(self.callback(state.iter, state.rho, primal, dual))
        if not new > 0 or not np.isfinite(new):
            raise InvalidRho(f"rho callback returned {new}")
        if new != state.rho:
            _set_rho(state, new)
        return new


RhoPolicy = Union[FixedRho, ResidualBalance, CustomRho]


def as_policy(policy) -> RhoPolicy:
    if policy is None or policy == "fixed":
        return FixedRho()
    if policy == "balance":
        return ResidualBalance()
    if isinstance(policy, (FixedRho, ResidualBalance, CustomRho)):
        return policy
    if callable(policy):
        return CustomRho(policy)
    raise ValueError(f"unknown rho policy {policy!r}")


def update_rho(policy, state: SolverState, primal: float, dual: float) -> float:
    """Apply a penalty policy, rescaling ``u`` so ``rho * u`` is unchanged."""
    return as_policy(policy).update(state, primal, dual)


@dataclass
class SolveResult:
    x: Dict[int, np.ndarray]
    objective: float
    status: Status
    iters: int
    history: List[IterationRecord]
    rho: float
    state: SolverState = field(repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def stacked(self) -> np.ndarray:
        """Solution values concatenated in ascending node id order."""
        return self.state.x.copy()

    def print_solution(self, file=None):
        file = sys.stdout if file is None else file
        print(f"Status: {self.status.value}  iterations: {self.iters}  objective: {self.objective:.10g}", file=file)
        for i, value in self.x.items():
            print(f"Node {i}: {np.array2string(value, precision=6)}", file=file)


def format_trace(it: int, rec: IterationRecord) -> str:
    return (
        f"iter={it} r={rec.primal:.6e} s={rec.dual:.6e} "
        f"eps_pri={rec.eps_pri:.6e} eps_dual={rec.eps_dual:.6e} rho={rec.rho:.6e}"
    )


def solve(
    graph: ProblemGraph,
    criteria: Optional[StoppingCriteria] = None,
    rho0: float = 1.0,
    policy=None,
    threads: int = 1,
    verbose: bool = False,
    warm=None,
    stream=None,
    prune_zero_edges: bool = True,
) -> SolveResult:
    """Minimize the sum of all node and edge objectives of ``graph``.

    Args:
        graph: The problem.
        criteria: Tolerances and iteration limit; defaults to
            ``StoppingCriteria()``.
        rho0: Initial penalty.
        policy: ``None``/``"fixed"``, ``"balance"``, a policy object, or a
            callable ``(iter, rho, primal, dual) -> rho``.
        threads: Worker threads for the node and edge steps.  Results are
            identical for every thread count.
        verbose: Write one trace line per iteration to ``stream``
            (default stderr).
        warm: Warm start, see :func:`initialize`.

    Returns:
        A :class:`SolveResult`.  Hitting the iteration limit is reported
        through ``status``, not raised.
    """
    criteria = criteria or StoppingCriteria()
    policy = as_policy(policy)
    threads = max(1, int(threads))
    state = initialize(graph, rho0, warm, prune_zero_edges, nblocks=threads)
    stream = sys.stderr if stream is None else stream
    history: List[IterationRecord] = []
    status = Status.MAX_ITERS
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        if state.layout.P == 0:
            x_update(state)
            status = Status.CONVERGED
        while status is not Status.CONVERGED and state.iter < criteria.max_iters:
            x_update(state, pool)
            prev = z_update(state, pool)
            u_update(state)
            res = residuals(state, prev, criteria)
            state.iter += 1
            rec = IterationRecord(*res, state.rho)
            history.append(rec)
            if verbose:
                print(format_trace(state.iter, rec), file=stream)
            if res.converged:
                status = Status.CONVERGED
            else:
                policy.update(state, res.primal, res.dual)
    finally:
        if pool is not None:
            pool.shutdown()
    x = state.x_dict()
    return SolveResult(
        x=x,
        objective=graph.objective(x),
        status=status,
        iters=state.iter,
        history=history,
        rho=state.rho,
        state=state,
    )
