"""Exception hierarchy shared by every hetfs module."""


class HetfsError(Exception):
    """Base class for all errors raised by hetfs."""


class FormatError(HetfsError):
    """A malformed record in an input file."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class UnknownType(FormatError):
    pass


class UnknownNode(FormatError):
    pass


class UnknownRelation(FormatError):
    pass


class EndpointTypeMismatch(FormatError):
    pass


class ParseError(HetfsError):
    pass


class AmbiguousRelation(ParseError):
    pass


class SchemaMismatch(ParseError):
    pass


class NoPathExists(HetfsError):
    pass


class InfeasibleSpec(HetfsError):
    pass


class EmptyCorpus(HetfsError):
    pass


class EmptyGraph(HetfsError):
    pass


class InvalidParameter(HetfsError, ValueError):
    pass


class NegativeValue(InvalidParameter):
    pass


class InvalidWalkCount(InvalidParameter):
    pass


class NotNeighbor(HetfsError):
    pass


class TypeMismatch(HetfsError):
    pass


class AsymmetricMetaPath(HetfsError):
    pass


class UnsupportedContentMode(HetfsError):
    pass


class EmptyTestSet(HetfsError):
    pass


class EmptyInput(HetfsError, ValueError):
    pass


class NoLabeledNeighbors(HetfsError):
    pass
