"""Exception types shared across the library.

Everything derives from ValueError so callers that do not care about the
fine-grained category can catch a single base class.
"""

from __future__ import annotations


class ShapeError(ValueError):
    """An array shape is inconsistent with the operation's contract."""


class DegenerateInputError(ValueError):
    """Inputs carry too little information for the operation (too few
    points, all-zero weights, zero-norm vectors)."""


class DegenerateGeometryError(ValueError):
    """The optimization problem has no unique minimizer (rank-deficient
    point configuration, collinear trajectory)."""


class InvalidCameraError(ValueError):
    """Camera intrinsics or extrinsics violate the pinhole model contract."""


class NoPairsError(DegenerateInputError):
    """Both the high-rotation and the standard pair lists are empty."""


class ParseError(ValueError):
    """A text input failed to parse.

    Carries the 1-based line number of the offending line when known; the
    number is also baked into the message so CLI users see it.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(ValueError):
    """A binary payload violates the tensor interchange format."""


class InsufficientLengthError(ValueError):
    """A trajectory is too short for the requested metric."""
