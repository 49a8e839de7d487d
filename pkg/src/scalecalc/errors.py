"""Exception hierarchy shared by every module."""


class ScaleCalcError(Exception):
    """Base class for all library errors."""


class GridMismatchError(ScaleCalcError, ValueError):
    pass


class PaddingError(ScaleCalcError, ValueError):
    """The grid extension is too short for the requested shift."""


class InvalidSampleError(ScaleCalcError, LookupError):
    """A poisoned (shifted-out) sample was read."""


class NonFiniteError(ScaleCalcError, ValueError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"non-finite value at node index {index}")


class OffGridError(ScaleCalcError, ValueError):
    pass


class DegenerateError(ScaleCalcError, ValueError):
    """The input carries no usable signal (e.g. a constant function)."""


class VanishingWaveFunctionError(ScaleCalcError, ZeroDivisionError):
    def __init__(self, indices):
        self.indices = indices
        super().__init__(f"wave function vanishes at probe node(s) {indices[:10]}")
