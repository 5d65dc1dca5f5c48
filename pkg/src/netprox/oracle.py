"""Independent solvers for checking the ADMM engine.

These share no code with the engine's update rules: the quadratic oracle
solves the stationarity equations directly, and the 1-D and 2-D searches
only evaluate objectives.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, Tuple

import mpmath
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from .atoms import EdgeKind, NodeKind
from .errors import NotQuadratic, SingularSystem
from .graph import ProblemGraph


def quadratic_system(g: ProblemGraph):
    """Assemble ``H x = b`` from the gradient of a SUM_SQUARES / SQ_DIFF problem.

    The gradient of ``w ||x_i - a||^2`` is ``2w (x_i - a)``, and that of
    ``w ||x_j - x_k||^2`` is ``2w (x_j - x_k)`` on the ``j`` side.
    """
    ids = g.node_ids()
    off = {}
    pos = 0
    for i in ids:
        off[i] = pos
        pos += g.nodes[i].dim
    p = pos
    rows, cols, vals = [], [], []
    b = np.zeros(p)
    anchored = np.zeros(len(ids), dtype=bool)
    for n, i in enumerate(ids):
        node = g.nodes[i]
        if node.box is not None:
            raise NotQuadratic(f"node {i} has a box constraint")
        d = node.dim
        for atom in node.objective:
            if atom.kind is NodeKind.SUM_SQUARES:
                idx = np.arange(off[i], off[i] + d)
                rows.append(idx)
                cols.append(idx)
                vals.append(np.full(d, 2.0 * atom.weight))
                b[idx] += 2.0 * atom.weight * np.broadcast_to(atom.shift, (d,))
                anchored[n] |= atom.weight > 0
            elif atom.kind is NodeKind.LINEAR:
                b[off[i]:off[i] + d] -= atom.weight * np.broadcast_to(atom.slope, (d,))
            elif atom.kind is not NodeKind.ZERO:
                raise NotQuadratic(f"node {i} has a {atom.kind.value} atom")
    adj_r, adj_c = [], []
    for (j, k), edge in sorted(g.edges.items()):
        for atom in edge.objective:
            if atom.kind is EdgeKind.ZERO:
                continue
            if atom.kind is not EdgeKind.SQ_DIFF:
                raise NotQuadratic(f"edge {(j, k)} has a {atom.kind.value} atom")
            d = g.nodes[j].dim
            ij = np.arange(off[j], off[j] + d)
            ik = np.arange(off[k], off[k] + d)
            c = np.full(d, 2.0 * atom.weight)
            rows += [ij, ik, ij, ik]
            cols += [ij, ik, ik, ij]
            vals += [c, c, -c, -c]
            if atom.weight > 0:
                adj_r.append(j)
                adj_c.append(k)
    H = sp.csr_matrix(
        (np.concatenate(vals) if vals else np.zeros(0),
         (np.concatenate(rows) if rows else np.zeros(0, int),
          np.concatenate(cols) if cols else np.zeros(0, int))),
        shape=(p, p),
    )
    pos_of = {i: n for n, i in enumerate(ids)}
    adj = sp.coo_matrix(
        (np.ones(len(adj_r)), ([pos_of[j] for j in adj_r], [pos_of[k] for k in adj_c])),
        shape=(len(ids), len(ids)),
    )
    _, labels = connected_components(adj, directed=False)
    for comp in np.unique(labels):
        if not anchored[labels == comp].any():
            raise SingularSystem("a connected component has no positive SUM_SQUARES weight")
    return H, b


def quadratic_oracle(g: ProblemGraph, rtol: float = 1e-12) -> Dict[int, np.ndarray]:
    """Exact minimizer of a quadratic graph problem by conjugate gradient."""
    H, b = quadratic_system(g)
    if H.shape[0] == 0:
        return {}
    x, info = cg(H, b, rtol=rtol, atol=0.0, maxiter=20 * H.shape[0])
    if info != 0:
        raise SingularSystem(f"conjugate gradient did not converge (info={info})")
    return g.unstack(x)


def prox_oracle_1d(
    f: Callable,
    v: float,
    sigma: float,
    bounds: Tuple[float, float] = (-math.inf, math.inf),
    width: float = 1e-10,
    prec: int = 200,
) -> float:
    """Minimize ``f(t) + sigma/2 (t - v)^2`` over an interval by ternary search.

    ``f`` is called with ``mpmath.mpf`` arguments at ``prec`` bits, so it
    should use plain arithmetic and ``abs``.  Value comparisons can only
    locate a minimizer to about ``sqrt(ulp(F) / sigma)``, which in double or
    even extended precision is coarser than ``width`` once ``|F|`` is large.
    Infinite bounds are replaced by a bracket found by doubling steps away
    from ``v``.
    """
    with mpmath.workprec(prec):
        mpf = mpmath.mpf
        v, sigma = mpf(v), mpf(sigma)
        lo, hi = mpf(bounds[0]), mpf(bounds[1])

        def obj(t):
            return f(t) + sigma / 2 * (t - v) ** 2

        start = min(max(v, lo), hi)
        if mpmath.isinf(lo):
            lo = _bracket(obj, start, -1)
        if mpmath.isinf(hi):
            hi = _bracket(obj, start, 1)
        while hi - lo > width:
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            # Difference of the two probes with the quadratic part factored.
            diff = (f(m1) - f(m2)) + sigma / 2 * (m1 - m2) * (m1 + m2 - 2 * v)
            if diff < 0:
                hi = m2
            elif diff > 0:
                lo = m1
            else:
                lo, hi = m1, m2
        return float((lo + hi) / 2)


def _bracket(obj, start, direction):
    # The prox objective is strictly convex, so once it rises above its value
    # at ``start`` the minimizer lies on the near side.
    f0 = obj(start)
    step = 1
    while True:
        t = start + direction * step
        if obj(t) > f0:
            return t
        step *= 2


def grid_refine_2d(
    objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
    box: Tuple[Tuple[float, float], Tuple[float, float]],
    points: int = 41,
    halo: int = 4,
    final_width: float = 1e-8,
) -> Tuple[float, float]:
    """Coarse-to-fine grid minimization of a vectorized 2-D objective.

    Each round evaluates a ``points x points`` grid and recenters a window
    of ``halo`` cells on either side of the best point.  Stops when the
    cell width falls below ``final_width`` in both coordinates.  Grids are
    built in extended precision; ``objective`` should only use numpy
    operations so the precision carries through.
    """
    x_lo, x_hi = map(np.longdouble, box[0])
    y_lo, y_hi = map(np.longdouble, box[1])
    while True:
        xs = np.linspace(x_lo, x_hi, points, dtype=np.longdouble)
        ys = np.linspace(y_lo, y_hi, points, dtype=np.longdouble)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        vals = objective(X, Y)
        a, b = np.unravel_index(np.argmin(vals), vals.shape)
        hx, hy = xs[1] - xs[0], ys[1] - ys[0]
        if hx <= final_width and hy <= final_width:
            return float(xs[a]), float(ys[b])
        x_lo, x_hi = xs[a] - halo * hx, xs[a] + halo * hx
        y_lo, y_hi = ys[b] - halo * hy, ys[b] + halo * hy
