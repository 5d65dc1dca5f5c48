"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`NetproxError`, so callers (and the CLI) can catch one type.
"""


class NetproxError(Exception):
    """Base class for all package errors."""


class GraphError(NetproxError):
    pass


class DuplicateNode(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class UnknownEndpoint(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class UnknownEdge(GraphError):
    pass


class DimensionMismatch(NetproxError):
    pass


class InvalidBox(NetproxError):
    pass


class NegativeWeight(NetproxError):
    pass


class UnsupportedComposite(NetproxError):
    """Objective is a sum of atoms with no closed-form prox."""


class UnboundedObjective(NetproxError):
    pass


class TemplateError(NetproxError):
    pass


class TemplateSyntaxError(TemplateError):
    """Malformed template; ``position`` is the byte offset of the problem."""

    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownAtom(TemplateError):
    def __init__(self, name, position=None):
        where = "" if position is None else f" at offset {position}"
        super().__init__(f"unknown atom {name!r}{where}")
        self.name = name
        self.position = position


class DuplicateBox(TemplateSyntaxError):
    pass


class MissingColumn(TemplateError):
    pass


class RowDimensionMismatch(TemplateError):
    pass


class InvalidRho(NetproxError):
    pass


class WarmStartDimMismatch(NetproxError):
    pass


class ParseError(NetproxError):
    """Malformed input file; carries the file name and 1-based line number."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
            if line is not None:
                loc += f"{line}:"
            loc += " "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class OddNodeCount(NetproxError):
    pass


class NotQuadratic(NetproxError):
    pass


class SingularSystem(NetproxError):
    pass
