"""File formats: edge lists, node/edge data CSVs, solution and summary output."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from . import dsl
from .atoms import AtomSpec, NodeKind
from .errors import DuplicateEdge, DuplicateNode, ParseError, SelfLoop
from .graph import ProblemGraph, edge_key

_VECTOR_COL = re.compile(r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\[(?P<idx>\d+)\]$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def read_edge_list(path) -> list:
    """Read ``j k`` pairs, one per line.  ``#`` starts a comment."""
    edges = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ParseError(f"expected 'j k', got {line!r}", path, lineno)
            try:
                j, k = (int(f) for f in fields)
            except ValueError:
                raise ParseError(f"node ids must be integers, got {line!r}", path, lineno) from None
            if j < 0 or k < 0:
                raise ParseError(f"node ids must be nonnegative, got {line!r}", path, lineno)
            if j == k:
                raise SelfLoop(f"{path}:{lineno}: self-loop on node {j}")
            key = edge_key(j, k)
            if key in seen:
                raise DuplicateEdge(f"{path}:{lineno}: duplicate edge {key}")
            seen.add(key)
            edges.append(key)
    return edges


def _columns(header, path, key_cols):
    """Map header names to ``(length, positions)``; ``length`` is None for scalars."""
    if header[: len(key_cols)] != list(key_cols):
        raise ParseError(f"header must start with {','.join(key_cols)}", path, 1)
    scalars: Dict[str, int] = {}
    vectors: Dict[str, Dict[int, int]] = {}
    for pos, name in enumerate(header[len(key_cols):], len(key_cols)):
        m = _VECTOR_COL.match(name)
        if m:
            slots = vectors.setdefault(m["name"], {})
            slot = int(m["idx"])
            if slot in slots:
                raise ParseError(f"duplicate column {name!r}", path, 1)
            slots[slot] = pos
        elif _NAME.match(name):
            if name in scalars:
                raise ParseError(f"duplicate column {name!r}", path, 1)
            scalars[name] = pos
        else:
            raise ParseError(f"bad column name {name!r}", path, 1)
    for name in scalars.keys() & vectors.keys():
        raise ParseError(f"column {name!r} is both scalar and vector", path, 1)
    out = {name: (None, pos) for name, pos in scalars.items()}
    for name, slots in vectors.items():
        if sorted(slots) != list(range(len(slots))):
            raise ParseError(f"vector column {name!r} is not contiguous from 0", path, 1)
        out[name] = (len(slots), [slots[n] for n in range(len(slots))])
    return out


def _read_table(path, key_cols):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", path, 1)
    header = [h.strip() for h in rows[0]]
    cols = _columns(header, path, key_cols)
    table = {}
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        try:
            key = tuple(int(row[i]) for i in range(len(key_cols)))
            record = {}
            for name, (length, where) in cols.items():
                if length is None:
                    record[name] = float(row[where])
                else:
                    record[name] = np.array([float(row[i]) for i in where])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if any(k < 0 for k in key):
            raise ParseError("ids must be nonnegative", path, lineno)
        if key in table:
            raise ParseError(f"duplicate id {key if len(key) > 1 else key[0]}", path, lineno)
        table[key] = record
    return table


def read_node_data(path) -> Dict[int, dict]:
    """Read a node data CSV: ``id`` first, then ``name`` or ``name[0], name[1], ...`` columns."""
    return {key[0]: row for key, row in _read_table(path, ("id",)).items()}


def read_edge_data(path) -> Dict[Tuple[int, int], dict]:
    """Read an edge data CSV: ``src,dst`` first, then data columns as for nodes."""
    table = _read_table(path, ("src", "dst"))
    out = {}
    for (j, k), row in table.items():
        key = edge_key(j, k)
        if key in out:
            raise DuplicateEdge(f"{path}: edge {key} listed twice")
        out[key] = row
    return out


def load_problem(
    graph_path,
    node_data_path,
    node_template: str,
    edge_template: str,
    edge_data_path=None,
) -> ProblemGraph:
    """Build a problem from an edge list, node data and objective templates.

    ``node_data_path`` and ``node_template`` may also be equal-length lists;
    each template is then applied to the nodes of its paired data file, so
    groups of nodes can carry objectives of different forms.  Nodes that
    appear in the edge list but not in any node data get an empty (zero)
    objective; their dimension is taken from a neighbor.
    """
    paths = [node_data_path] if isinstance(node_data_path, (str, Path)) else list(node_data_path)
    templates = [node_template] if isinstance(node_template, str) else list(node_template)
    if len(paths) != len(templates):
        raise ValueError(f"{len(paths)} node data files but {len(templates)} node templates")
    ntemps = [dsl.parse_node_template(t) for t in templates]
    etemp = dsl.parse_edge_template(edge_template)
    edges = read_edge_list(graph_path)

    g = ProblemGraph()
    for path, ntemp in zip(paths, ntemps):
        data = read_node_data(path)
        for i in data:
            if i in g.nodes:
                raise DuplicateNode(f"{path}: node {i} already defined by another node data file")
        g.add_node_objectives(ntemp, data)
    pending = {i for e in edges for i in e if i not in g.nodes}
    adjacency: Dict[int, list] = {}
    for j, k in edges:
        adjacency.setdefault(j, []).append(k)
        adjacency.setdefault(k, []).append(j)
    # Relay nodes borrow the dimension of any neighbor that has one.
    while pending:
        progress = False
        for i in sorted(pending):
            dims = [g.nodes[j].dim for j in adjacency[i] if j in g.nodes]
            if dims:
                g.add_node(i, dims[0], [AtomSpec(NodeKind.ZERO, 0.0)])
                pending.discard(i)
                progress = True
        if not progress:
            for i in sorted(pending):
                g.add_node(i, 1, [AtomSpec(NodeKind.ZERO, 0.0)])
            pending.clear()
    for j, k in edges:
        g.add_edge(j, k)
    edge_data = read_edge_data(edge_data_path) if edge_data_path is not None else None
    g.add_edge_objectives(etemp, edge_data)
    return g


def write_solution(result, path_or_file):
    """Write ``id,x[0],x[1],...`` rows in ascending id order, 17 significant digits.

    Nodes shorter than the widest node leave trailing cells empty.
    """
    width = max((len(v) for v in result.x.values()), default=1)
    header = ["id"] + [f"x[{n}]" for n in range(width)]

    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in sorted(result.x):
            cells = [format(float(v), ".17g") for v in result.x[i]]
            writer.writerow([i] + cells + [""] * (width - len(cells)))

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def read_solution(path) -> Dict[int, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    out = {}
    for lineno, row in enumerate(rows[1:], 2):
        try:
            out[int(row[0])] = np.array([float(c) for c in row[1:] if c != ""])
        except (ValueError, IndexError):
            raise ParseError(f"bad solution row {row!r}", path, lineno) from None
    return out


def summary_dict(result, rho0: Optional[float] = None) -> dict:
    last = result.history[-1] if result.history else None
    return {
        "status": result.status.value,
        "iters": result.iters,
        "objective": result.objective,
        "primal_residual": last.primal if last else 0.0,
        "dual_residual": last.dual if last else 0.0,
        "eps_pri": last.eps_pri if last else 0.0,
        "eps_dual": last.eps_dual if last else 0.0,
        "rho_initial": result.history[0].rho if result.history else rho0,
        "rho_final": result.rho,
    }


def write_summary(result, path, rho0: Optional[float] = None):
    Path(path).write_text(json.dumps(summary_dict(result, rho0), indent=2) + "\n", encoding="utf-8")


def write_edge_list(edges, path):
    with open(path, "w", encoding="utf-8") as fh:
        for j, k in edges:
            fh.write(f"{j} {k}\n")


def write_node_data(data: Mapping[int, Mapping], path):
    """Inverse of :func:`read_node_data` for rows sharing one column layout."""
    ids = sorted(data)
    first = data[ids[0]]
    header = ["id"]
    for name, value in first.items():
        if np.ndim(value) == 0:
            header.append(name)
        else:
            header += [f"{name}[{n}]" for n in range(len(value))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in ids:
            row = [i]
            for value in data[i].values():
                row += [format(float(v), ".17g") for v in np.atleast_1d(value)]
            writer.writerow(row)
