"""Exception types raised by the kernels and tooling."""


class EffMemError(Exception):
    """Base class for all library errors."""


class ShapeError(EffMemError, ValueError):
    pass


class NumericError(EffMemError, ArithmeticError):
    pass


class EmptyMemoryError(EffMemError, ValueError):
    pass


class PoolingSpecError(EffMemError, ValueError):
    pass


class SegmentationError(EffMemError, ValueError):
    pass


class DegenerateQueryError(EffMemError, ArithmeticError):
    pass


class LocalityError(EffMemError, ValueError):
    """Locality is undefined for grids holding fewer than two tokens."""
