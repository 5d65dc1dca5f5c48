"""Objective atoms with closed-form proximal operators.

Node atoms act on a single node variable ``x`` and are always applied to a
shifted argument ``x - a`` (except LINEAR, which is ``w * c @ x``).  Edge
atoms act on the difference of the two endpoint variables.

The prox of a function ``f`` with quadratic coefficient ``sigma`` is::

    prox(v) = argmin_t  f(t) + (sigma / 2) * ||t - v||^2

The elementwise kernels (``prox_sum_squares`` and friends) broadcast, so the
ADMM engine calls them directly on stacked arrays spanning many nodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidBox,
    NegativeWeight,
    UnboundedObjective,
    UnsupportedComposite,
)


class NodeKind(enum.Enum):
    SUM_SQUARES = "sum_squares"
    NORM1 = "norm1"
    NORM2 = "norm2"
    HUBER = "huber"
    LINEAR = "linear"
    ZERO = "zero"


class EdgeKind(enum.Enum):
    ZERO = "zero"
    SQ_DIFF = "sq_diff"
    NETLASSO = "netlasso"
    ABS_DIFF = "abs_diff"


SEPARABLE = frozenset(
    {NodeKind.SUM_SQUARES, NodeKind.NORM1, NodeKind.HUBER, NodeKind.LINEAR, NodeKind.ZERO}
)
SHIFTED = frozenset({NodeKind.SUM_SQUARES, NodeKind.NORM1, NodeKind.NORM2, NodeKind.HUBER})


def _vec(value) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {arr.shape}")
    return arr


def _check_weight(w):
    w = float(w)
    if not w >= 0:
        raise NegativeWeight(f"atom weight must be nonnegative, got {w}")
    return w


@dataclass(frozen=True, eq=False)
class AtomSpec:
    """One node objective term.

    ``shift`` is used by the shifted kinds, ``slope`` by LINEAR and
    ``threshold`` (the Huber knee M) by HUBER only.
    """

    kind: NodeKind
    weight: float = 1.0
    shift: Optional[np.ndarray] = None
    slope: Optional[np.ndarray] = None
    threshold: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        object.__setattr__(self, "weight", _check_weight(self.weight))
        if self.kind in SHIFTED:
            shift = 0.0 if self.shift is None else self.shift
            object.__setattr__(self, "shift", _vec(shift))
        if self.kind is NodeKind.LINEAR:
            if self.slope is None:
                raise ValueError("LINEAR atom needs a slope vector")
            object.__setattr__(self, "slope", _vec(self.slope))
        if self.kind is NodeKind.HUBER:
            m = float(self.threshold)
            if not m > 0:
                raise ValueError(f"Huber threshold must be positive, got {m}")
            object.__setattr__(self, "threshold", m)

    @property
    def separable(self) -> bool:
        return self.kind in SEPARABLE

    def param_lengths(self) -> list:
        return [len(p) for p in (self.shift, self.slope) if p is not None]

    def __eq__(self, other):
        if not isinstance(other, AtomSpec):
            return NotImplemented
        if (self.kind, self.weight, self.threshold) != (other.kind, other.weight, other.threshold):
            return False
        for mine, theirs in ((self.shift, other.shift), (self.slope, other.slope)):
            if (mine is None) != (theirs is None):
                return False
            if mine is not None and not np.array_equal(mine, theirs):
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class EdgeAtomSpec:
    kind: EdgeKind
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EdgeKind(self.kind))
        object.__setattr__(self, "weight", _check_weight(self.weight))

    @property
    def is_zero(self) -> bool:
        return self.kind is EdgeKind.ZERO or self.weight == 0.0


# Library sugar.

def sum_squares(a=0.0, w=1.0) -> AtomSpec:
    return AtomSpec(NodeKind.SUM_SQUARES, w, shift=a)


def square(w=1.0) -> AtomSpec:
    """``w * ||x||^2``."""
    return AtomSpec(NodeKind.SUM_SQUARES, w, shift=0.0)


def norm1(a=0.0, w=1.0) -> AtomSpec:
    return AtomSpec(NodeKind.NORM1, w, shift=a)


def norm2(a=0.0, w=1.0) -> AtomSpec:
    return AtomSpec(NodeKind.NORM2, w, shift=a)


def huber(a=0.0, threshold=1.0, w=1.0) -> AtomSpec:
    return AtomSpec(NodeKind.HUBER, w, shift=a, threshold=threshold)


def linear(c, w=1.0) -> AtomSpec:
    return AtomSpec(NodeKind.LINEAR, w, slope=c)


def zero() -> AtomSpec:
    return AtomSpec(NodeKind.ZERO, 0.0)


def sq_diff(w=1.0) -> EdgeAtomSpec:
    return EdgeAtomSpec(EdgeKind.SQ_DIFF, w)


def netlasso(w=1.0) -> EdgeAtomSpec:
    return EdgeAtomSpec(EdgeKind.NETLASSO, w)


def abs_diff(w=1.0) -> EdgeAtomSpec:
    return EdgeAtomSpec(EdgeKind.ABS_DIFF, w)


def zero_edge() -> EdgeAtomSpec:
    return EdgeAtomSpec(EdgeKind.ZERO, 0.0)


# Evaluation.

def huber_loss(t, threshold):
    """Elementwise Huber function, ``t**2`` inside the knee, ``M(2|t| - M)`` outside."""
    t = np.abs(t)
    return np.where(t <= threshold, t * t, threshold * (2.0 * t - threshold))


def _check_dim(atom: AtomSpec, dim: int):
    for n in atom.param_lengths():
        if n not in (1, dim):
            raise DimensionMismatch(
                f"{atom.kind.value} parameter has length {n}, variable has dim {dim}"
            )


def eval_node_atom(atom: AtomSpec, x) -> float:
    x = _vec(x)
    _check_dim(atom, len(x))
    kind, w = atom.kind, atom.weight
    if kind is NodeKind.ZERO:
        return 0.0
    if kind is NodeKind.LINEAR:
        return w * float(np.sum(np.broadcast_to(atom.slope, x.shape) * x))
    d = x - atom.shift
    if kind is NodeKind.SUM_SQUARES:
        return w * float(d @ d)
    if kind is NodeKind.NORM1:
        return w * float(np.sum(np.abs(d)))
    if kind is NodeKind.NORM2:
        return w * float(np.linalg.norm(d))
    return w * float(np.sum(huber_loss(d, atom.threshold)))


def eval_node_objective(objective: Sequence[AtomSpec], x) -> float:
    return sum((eval_node_atom(atom, x) for atom in objective), 0.0)


def eval_edge_atom(atom: EdgeAtomSpec, xa, xb) -> float:
    if atom.kind is EdgeKind.ZERO:
        return 0.0
    d = _vec(xa) - _vec(xb)
    if atom.kind is EdgeKind.SQ_DIFF:
        return atom.weight * float(d @ d)
    if atom.kind is EdgeKind.NETLASSO:
        return atom.weight * float(np.linalg.norm(d))
    return atom.weight * float(np.sum(np.abs(d)))


def eval_edge_objective(objective: Sequence[EdgeAtomSpec], xa, xb) -> float:
    return sum((eval_edge_atom(atom, xa, xb) for atom in objective), 0.0)


# Elementwise prox kernels.  All arguments broadcast.

def soft_threshold(y, t):
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def prox_sum_squares(v, sigma, w, a):
    return (sigma * v + 2.0 * w * a) / (sigma + 2.0 * w)


def prox_norm1(v, sigma, w, a):
    return a + soft_threshold(v - a, w / sigma)


def prox_huber(v, sigma, w, a, threshold):
    d = v - a
    quad = sigma * d / (sigma + 2.0 * w)
    lin = d - np.sign(d) * (2.0 * w * threshold / sigma)
    inside = np.abs(d) <= threshold * (sigma + 2.0 * w) / sigma
    return a + np.where(inside, quad, lin)


def group_norms(sq, starts):
    """Euclidean norms of contiguous segments of ``sqrt(sq)`` beginning at ``starts``."""
    if len(starts) == 0:
        return np.zeros(0)
    return np.sqrt(np.add.reduceat(sq, starts))


def block_shrink(d, t, norms):
    """``max(1 - t/||d||, 0) * d`` with the convention 0 at ``d == 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > t, 1.0 - t / norms, 0.0)
    return scale * d


def prox_norm2(v, sigma, w, a):
    d = _vec(v) - a
    n = np.linalg.norm(d)
    return a + block_shrink(d, w / sigma, n)


# Per-node operations.

def split_objective(objective: Sequence[AtomSpec]):
    """Fold an objective into ``(main_atom, linear_term)``.

    LINEAR atoms collapse into one summed slope vector ``sum(w * c)``; ZERO
    atoms and zero-weight atoms drop out.  At most one other atom may remain.
    """
    main = None
    lin = None
    for atom in objective:
        if atom.kind is NodeKind.LINEAR:
            term = atom.weight * atom.slope
            lin = term if lin is None else lin + term
        elif atom.kind is NodeKind.ZERO or atom.weight == 0.0:
            continue
        elif main is not None:
            raise UnsupportedComposite(
                f"no closed-form prox for {main.kind.value} + {atom.kind.value}"
            )
        else:
            main = atom
    return main, lin


def normalize_box(box, dim: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    if box is None:
        return None
    lower, upper = box
    lo = np.broadcast_to(_vec(-np.inf if lower is None else lower), (dim,))
    hi = np.broadcast_to(_vec(np.inf if upper is None else upper), (dim,))
    if np.isnan(lo).any() or np.isnan(hi).any():
        raise InvalidBox("box bounds may not be NaN")
    if np.any(lo > hi):
        raise InvalidBox("box lower bound exceeds upper bound")
    return lo.copy(), hi.copy()


def check_objective(objective: Sequence[AtomSpec], box, dim: int):
    for atom in objective:
        _check_dim(atom, dim)
    if box is not None and not all(atom.separable for atom in objective):
        raise InvalidBox("box constraints require separable atoms")


def prox_node(objective: Sequence[AtomSpec], v, sigma: float, box=None) -> np.ndarray:
    """Exact prox of a node objective, clamped into ``box`` when given."""
    v = _vec(v)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    check_objective(objective, box, len(v))
    box = normalize_box(box, len(v))
    main, lin = split_objective(objective)
    if lin is not None:
        v = v - lin / sigma
    if main is None:
        t = v
    elif main.kind is NodeKind.SUM_SQUARES:
        t = prox_sum_squares(v, sigma, main.weight, main.shift)
    elif main.kind is NodeKind.NORM1:
        t = prox_norm1(v, sigma, main.weight, main.shift)
    elif main.kind is NodeKind.HUBER:
        t = prox_huber(v, sigma, main.weight, main.shift, main.threshold)
    else:
        t = prox_norm2(v, sigma, main.weight, main.shift)
    t = np.broadcast_to(t, v.shape).astype(float)
    if box is not None:
        t = np.clip(t, *box)
    return t


def argmin_node(objective: Sequence[AtomSpec], box=None, dim: Optional[int] = None) -> np.ndarray:
    """Exact minimizer of a node objective on its own (no coupling).

    Where the minimizer is a set (flat directions), the point closest to the
    shift ``a`` is returned; a pure ZERO objective yields the projection of
    the origin onto the box.
    """
    if dim is None:
        lengths = [n for atom in objective for n in atom.param_lengths()]
        dim = max(lengths, default=1)
    check_objective(objective, box, dim)
    box = normalize_box(box, dim)
    main, lin = split_objective(objective)
    lin = np.zeros(dim) if lin is None else np.broadcast_to(lin, (dim,)).astype(float)
    a = np.zeros(dim) if main is None else np.broadcast_to(main.shift, (dim,)).astype(float)

    if main is not None and main.kind is NodeKind.NORM2:
        if np.linalg.norm(lin) > main.weight:
            raise UnboundedObjective("linear slope exceeds norm2 weight")
        return a.copy()

    # Unconstrained per-coordinate minimizer; +-inf marks an unbounded direction.
    kind = None if main is None else main.kind
    w = 0.0 if main is None else main.weight
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is None:
            t = np.where(lin > 0, -np.inf, np.where(lin < 0, np.inf, 0.0))
        elif kind is NodeKind.SUM_SQUARES:
            t = a - lin / (2.0 * w)
        elif kind is NodeKind.NORM1:
            t = np.where(np.abs(lin) <= w, a, np.where(lin > 0, -np.inf, np.inf))
        else:
            m = main.threshold
            steep = np.abs(lin) > 2.0 * w * m
            t = np.where(
                steep,
                np.where(lin > 0, -np.inf, np.inf),
                a - np.clip(lin / (2.0 * w), -m, m),
            )
    if box is not None:
        t = np.clip(t, *box)
    if not np.all(np.isfinite(t)):
        raise UnboundedObjective("node objective is unbounded below")
    return t


def _edge_main(objective: Sequence[EdgeAtomSpec]) -> Optional[EdgeAtomSpec]:
    live = [atom for atom in objective if not atom.is_zero]
    if len(live) > 1:
        kinds = " + ".join(atom.kind.value for atom in live)
        raise UnsupportedComposite(f"no closed-form edge prox for {kinds}")
    return live[0] if live else None


def edge_delta(kind: EdgeKind, d, rho, w, norms=None):
    """Shrunk endpoint difference for a difference-based edge atom.

    ``norms`` (NETLASSO only) are the per-entry norms of the edge's ``d``;
    when omitted ``d`` is treated as a single edge.
    """
    if kind is EdgeKind.SQ_DIFF:
        return rho * d / (rho + 4.0 * w)
    if kind is EdgeKind.ABS_DIFF:
        return soft_threshold(d, 2.0 * w / rho)
    if kind is EdgeKind.NETLASSO:
        if norms is None:
            norms = np.linalg.norm(d)
        return block_shrink(d, 2.0 * w / rho, norms)
    return d


def edge_prox(objective: Sequence[EdgeAtomSpec], c_a, c_b, rho: float):
    """Joint prox of an edge atom over both endpoint copies.

    Minimizes ``g(z_a, z_b) + rho/2 ||z_a - c_a||^2 + rho/2 ||z_b - c_b||^2``.
    """
    c_a, c_b = _vec(c_a), _vec(c_b)
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    main = _edge_main(objective)
    if main is None:
        return c_a.copy(), c_b.copy()
    if c_a.shape != c_b.shape:
        raise DimensionMismatch(f"edge endpoints have dims {len(c_a)} and {len(c_b)}")
    m = 0.5 * (c_a + c_b)
    delta = edge_delta(main.kind, c_a - c_b, rho, main.weight)
    half = 0.5 * delta
    return conserve_pair(c_a, c_b, m + half, m - half)


def conserve_pair(c_a, c_b, z_a, z_b):
    """Nudge ``(z_a, z_b)`` by at most an ulp so ``z_a + z_b == c_a + c_b`` in floats.

    The edge prox conserves the endpoint sum in exact arithmetic; rounding
    of ``m +- delta/2`` can break that by one ulp.  One endpoint is kept
    (or moved one ulp) and the other set to ``S - z``; the first candidate
    whose float sum reproduces ``S = c_a + c_b`` wins.  Coordinates where
    no candidate works keep the plain values.
    """
    s = c_a + c_b
    idx = np.flatnonzero(z_a + z_b != s)
    if not len(idx):
        return z_a, z_b
    z_a, z_b = z_a.copy(), z_b.copy()
    # The larger endpoint is tried first; the rule only looks at values, so
    # swapping the endpoints swaps the result.
    mag_a, mag_b = np.abs(z_a), np.abs(z_b)
    a_first = (mag_a > mag_b) | ((mag_a == mag_b) & (z_a > z_b))
    for first in (True, False):
        for step in (0.0, np.inf, -np.inf):
            keep_a = a_first[idx] == first
            base = np.where(keep_a, z_a[idx], z_b[idx])
            if step:
                base = np.nextafter(base, step)
            other = s[idx] - base
            a = np.where(keep_a, base, other)
            b = np.where(keep_a, other, base)
            good = a + b == s[idx]
            z_a[idx[good]], z_b[idx[good]] = a[good], b[good]
            idx = idx[~good]
            if not len(idx):
                return z_a, z_b
    return z_a, z_b
