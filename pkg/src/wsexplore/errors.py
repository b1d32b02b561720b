"""Exception types shared across the package.

Two families matter to callers: :class:`FormatError` for malformed or
unreadable inputs, and :class:`InfeasibleError` for well-formed requests that
cannot be satisfied (budget too tight, too many combinations, degenerate
regression data). The CLI maps them to exit codes 2 and 1.
"""


class WSError(ValueError):
    """Base class for all package errors."""


class ShapeError(WSError):
    """A tensor or layer shape does not chain with its neighbour."""

    def __init__(self, message, layer_index=None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class FormatError(WSError):
    """A file or document violates its declared format."""


class InfeasibleError(WSError):
    """The requested computation has no valid answer for these inputs."""


class RankDeficientError(InfeasibleError):
    def __init__(self, message, columns):
        super().__init__(message)
        self.columns = list(columns)
