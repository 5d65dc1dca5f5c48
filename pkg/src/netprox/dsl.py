"""Objective templates for bulk loading.

Node templates describe the objective shared by many nodes, with per-node
data referenced by column name::

    0.5*huber(x - a, 2.0) + linear(c); box(lo, 10)

Grammar (whitespace-insensitive)::

    template := term ('+' term)* (';' 'box' '(' bound ',' bound ')')?
    term     := [NUMBER '*'] atom
    atom     := sum_squares(x - SYM) | norm1(x - SYM) | norm2(x - SYM)
              | huber(x - SYM, NUMBER) | linear(SYM) | zero()
    bound    := SYM | ['-'] NUMBER | ['-'] 'inf'

Edge templates hold a single atom with one weight argument, e.g.
``netlasso(w)`` or ``sq_diff(0.75)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np

from .atoms import AtomSpec, EdgeAtomSpec, EdgeKind, NodeKind
from .errors import (
    DuplicateBox,
    MissingColumn,
    RowDimensionMismatch,
    TemplateSyntaxError,
    UnknownAtom,
    UnsupportedComposite,
)

# A bound or weight argument: a float literal or a column name.
Arg = Union[float, str]

NODE_ATOMS = {kind.value: kind for kind in NodeKind}
EDGE_ATOMS = {kind.value: kind for kind in EdgeKind}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[()+\-*,;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Term:
    kind: NodeKind
    coef: float = 1.0
    arg: Optional[str] = None  # shift column, or slope column for LINEAR
    threshold: Optional[float] = None


@dataclass(frozen=True)
class NodeTemplate:
    terms: Tuple[Term, ...]
    box: Optional[Tuple[Arg, Arg]] = None

    def symbols(self) -> List[str]:
        """Column names in order of first appearance."""
        names = [t.arg for t in self.terms if t.arg is not None]
        if self.box is not None:
            names += [b for b in self.box if isinstance(b, str)]
        return list(dict.fromkeys(names))


@dataclass(frozen=True)
class EdgeTemplate:
    kind: EdgeKind
    weight: Arg = 0.0

    def symbols(self) -> List[str]:
        return [self.weight] if isinstance(self.weight, str) else []


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind, self.text, self.pos = kind, text, pos


def _tokenize(src: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise TemplateSyntaxError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos))
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), _byte_offset(src, pos)))
        pos = m.end()
    tokens.append(_Token("eof", "", _byte_offset(src, len(src))))
    return tokens


def _byte_offset(src, pos):
    return len(src[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def fail(self, msg, tok=None):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise TemplateSyntaxError(f"{msg}, found {found!r}", tok.pos)

    def accept(self, text) -> bool:
        if self.tok.kind != "eof" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.fail(f"expected {text!r}")

    def number(self) -> float:
        if self.tok.kind != "number":
            self.fail("expected a number")
        value = float(self.tok.text)
        if not np.isfinite(value):
            self.fail("number out of range")
        self.i += 1
        return value

    def positive(self) -> float:
        tok = self.tok
        value = self.number()
        if value <= 0:
            self.fail("expected a positive number", tok)
        return value

    def symbol(self) -> str:
        if self.tok.kind != "ident" or self.tok.text == "x":
            self.fail("expected a column name")
        name = self.tok.text
        self.i += 1
        return name

    def atom_name(self, catalog):
        tok = self.tok
        if tok.kind != "ident":
            self.fail("expected an atom name")
        self.i += 1
        if self.tok.text != "(":
            self.fail("expected '('")
        if tok.text not in catalog:
            raise UnknownAtom(tok.text, tok.pos)
        self.i += 1
        return catalog[tok.text]

    def end(self):
        if self.tok.kind != "eof":
            self.fail("unexpected trailing input")

    # Node templates.

    def node_template(self) -> NodeTemplate:
        terms = [self.term()]
        while self.accept("+"):
            terms.append(self.term())
        box = None
        while self.accept(";"):
            tok = self.tok
            if tok.text != "box":
                self.fail("expected 'box'")
            if box is not None:
                raise DuplicateBox("box given twice", tok.pos)
            self.i += 1
            self.expect("(")
            lower = self.bound()
            self.expect(",")
            upper = self.bound()
            self.expect(")")
            box = (lower, upper)
        self.end()
        return NodeTemplate(tuple(terms), box)

    def term(self) -> Term:
        coef = 1.0
        if self.tok.kind == "number":
            coef = self.positive()
            self.expect("*")
        kind = self.atom_name(NODE_ATOMS)
        arg = threshold = None
        if kind is NodeKind.LINEAR:
            arg = self.symbol()
        elif kind is not NodeKind.ZERO:
            if self.tok.text != "x":
                self.fail("expected 'x'")
            self.i += 1
            self.expect("-")
            arg = self.symbol()
            if kind is NodeKind.HUBER:
                self.expect(",")
                threshold = self.positive()
        self.expect(")")
        return Term(kind, coef, arg, threshold)

    def bound(self) -> Arg:
        sign = -1.0 if self.accept("-") else 1.0
        if self.tok.kind == "ident" and self.tok.text == "inf":
            self.i += 1
            return sign * np.inf
        if self.tok.kind == "number":
            return sign * self.number()
        if sign < 0:
            self.fail("expected a number")
        return self.symbol()

    # Edge templates.

    def edge_template(self) -> EdgeTemplate:
        terms = [self.edge_term()]
        while self.accept("+"):
            terms.append(self.edge_term())
        self.end()
        if len(terms) > 1:
            raise UnsupportedComposite("edge templates take exactly one atom")
        return terms[0]

    def edge_term(self) -> EdgeTemplate:
        kind = self.atom_name(EDGE_ATOMS)
        if kind is EdgeKind.ZERO:
            weight: Arg = 0.0
        elif self.tok.kind == "number":
            weight = self.number()
        else:
            weight = self.symbol()
        self.expect(")")
        return EdgeTemplate(kind, weight)


def parse_node_template(src: str) -> NodeTemplate:
    if not src.strip():
        raise TemplateSyntaxError("empty template", 0)
    return _Parser(src).node_template()


def parse_edge_template(src: str) -> EdgeTemplate:
    if not src.strip():
        raise TemplateSyntaxError("empty template", 0)
    return _Parser(src).edge_template()


def _fmt(value: Arg) -> str:
    return value if isinstance(value, str) else repr(float(value))


def render_node_template(template: NodeTemplate) -> str:
    parts = []
    for t in template.terms:
        prefix = "" if t.coef == 1.0 else f"{_fmt(t.coef)}*"
        if t.kind is NodeKind.ZERO:
            body = "zero()"
        elif t.kind is NodeKind.LINEAR:
            body = f"linear({t.arg})"
        elif t.kind is NodeKind.HUBER:
            body = f"huber(x - {t.arg}, {_fmt(t.threshold)})"
        else:
            body = f"{t.kind.value}(x - {t.arg})"
        parts.append(prefix + body)
    out = " + ".join(parts)
    if template.box is not None:
        out += f"; box({_fmt(template.box[0])}, {_fmt(template.box[1])})"
    return out


def render_edge_template(template: EdgeTemplate) -> str:
    if template.kind is EdgeKind.ZERO:
        return "zero()"
    return f"{template.kind.value}({_fmt(template.weight)})"


# Instantiation.

def _lookup(row: Mapping, name: str):
    try:
        return row[name]
    except KeyError:
        raise MissingColumn(f"column {name!r} not found in data") from None


def _bind(value, dim: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or len(arr) not in (1, dim):
        raise RowDimensionMismatch(
            f"column {name!r} has length {arr.size}, expected {dim} or 1"
        )
    return np.broadcast_to(arr, (dim,)).copy()


def infer_dim(template: NodeTemplate, row: Mapping) -> int:
    """Dimension implied by the first vector-valued column the template binds."""
    for name in template.symbols():
        value = _lookup(row, name)
        if np.ndim(value) >= 1:
            return int(np.size(value))
    return 1


def instantiate(template: NodeTemplate, row: Mapping, dim: int):
    """Fill a node template with one data row.

    Returns ``(atoms, box)`` where ``box`` is ``None`` or a pair of arrays.
    """
    atoms = []
    for t in template.terms:
        if t.kind is NodeKind.ZERO:
            atoms.append(AtomSpec(NodeKind.ZERO, 0.0))
            continue
        vec = _bind(_lookup(row, t.arg), dim, t.arg)
        if t.kind is NodeKind.LINEAR:
            atoms.append(AtomSpec(t.kind, t.coef, slope=vec))
        elif t.kind is NodeKind.HUBER:
            atoms.append(AtomSpec(t.kind, t.coef, shift=vec, threshold=t.threshold))
        else:
            atoms.append(AtomSpec(t.kind, t.coef, shift=vec))
    box = None
    if template.box is not None:
        box = tuple(
            _bind(_lookup(row, b), dim, b) if isinstance(b, str) else np.full(dim, b)
            for b in template.box
        )
    return atoms, box


def instantiate_edge(template: EdgeTemplate, row: Mapping) -> List[EdgeAtomSpec]:
    if template.kind is EdgeKind.ZERO:
        return [EdgeAtomSpec(EdgeKind.ZERO, 0.0)]
    weight = template.weight
    if isinstance(weight, str):
        value = np.asarray(_lookup(row, weight), dtype=float)
        if value.size != 1:
            raise RowDimensionMismatch(f"edge weight column {weight!r} must be scalar")
        weight = float(value.reshape(()))
    return [EdgeAtomSpec(template.kind, weight)]
