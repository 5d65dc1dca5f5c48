"""Convex optimization over graphs by ADMM with closed-form proximal steps."""

from .atoms import (
    AtomSpec,
    EdgeAtomSpec,
    EdgeKind,
    NodeKind,
    abs_diff,
    huber,
    linear,
    netlasso,
    norm1,
    norm2,
    sq_diff,
    square,
    sum_squares,
    zero,
    zero_edge,
)
from .engine import (
    CustomRho,
    FixedRho,
    ResidualBalance,
    SolveResult,
    Status,
    StoppingCriteria,
    solve,
)
from .graph import EdgeSpec, NodeSpec, ProblemGraph

__version__ = "0.1.0"
