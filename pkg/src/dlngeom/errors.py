"""Exception hierarchy shared by every module.

The class names double as the error names the CLI prints, so keep them stable.
"""


class DLNGeometryError(ValueError):
    """Base class for numerical failures raised by this package."""


class NonFinite(DLNGeometryError):
    pass


class ShapeMismatch(DLNGeometryError):
    pass


class RankDeficient(DLNGeometryError):
    pass


class CoincidentSingularValues(DLNGeometryError):
    pass


class NotBalanced(DLNGeometryError):
    pass


class UnsupportedDimension(DLNGeometryError):
    pass


class ReportIOError(OSError):
    """Raised when a report cannot be written; the message carries the path."""
