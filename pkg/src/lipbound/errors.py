"""Exception hierarchy.

InputError subclasses map to CLI exit code 2, NumericalError to exit code 3.
"""


class LipboundError(Exception):
    pass


class InputError(LipboundError):
    """Bad user input: shapes, files, graph structure, preconditions."""


class NumericalError(LipboundError):
    """Computation failed for numerical reasons."""


class ShapeMismatch(InputError):
    pass


class NonFinite(InputError):
    pass


class TooLarge(InputError):
    pass


class TooWide(InputError):
    pass


class WidthExceeded(InputError):
    pass


class DimensionTooLarge(InputError):
    pass


class EmptyDataset(InputError):
    pass


class CyclicGraph(InputError):
    pass


class UnboundedPartial(InputError):
    """A graph node has a partial derivative with no global bound."""


class DepthTooSmall(InputError):
    pass


class ParseError(InputError):
    pass


class SchemaViolation(InputError):
    pass


class OffsetOutOfRange(InputError):
    pass


class RatioUndefined(NumericalError):
    """Singular value ratio requested for an operator with zero top singular value."""
