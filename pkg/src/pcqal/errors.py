"""Exception types shared across the package."""


class PcqalError(Exception):
    """Base class for all pcqal errors."""


class EmptyCloudError(PcqalError, ValueError):
    """A point cloud with zero points was passed where points are required."""


class SinglePointError(PcqalError, ValueError):
    """An operation needing at least two points received a single-point cloud."""


class NonFiniteCoordinateError(PcqalError, ValueError):
    """A coordinate is NaN or infinite."""


class InvalidParamsError(PcqalError, ValueError):
    """A hyperparameter or option is outside its valid range."""


class SizeMismatchError(PcqalError, ValueError):
    """Exact transport matching requires equal-size clouds."""


class TooLargeError(PcqalError, ValueError):
    """Input exceeds the supported size for an exact solver."""


class AssignmentUnstableError(PcqalError, RuntimeError):
    """A nearest-neighbor index or coverage mask flag flipped under the
    finite-difference perturbation, so the numerical gradient check is
    not meaningful at this configuration."""

    def __init__(self, message, point_index=None, coord=None):
        super().__init__(message)
        self.point_index = point_index
        self.coord = coord


class DivergedLossError(PcqalError, RuntimeError):
    """The fitting loop produced a non-finite loss value."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class CloudParseError(PcqalError, ValueError):
    """A cloud file could not be parsed; carries a line or byte offset."""

    def __init__(self, message, path=None, line=None, offset=None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.offset = offset

    def __str__(self):
        base = super().__str__()
        loc = []
        if self.path is not None:
            loc.append(str(self.path))
        if self.line is not None:
            loc.append(f"line {self.line}")
        if self.offset is not None:
            loc.append(f"byte {self.offset}")
        return f"{base} ({', '.join(loc)})" if loc else base
