"""Exception hierarchy shared by all dcaforge modules.

The CLI maps ``UsageError`` to exit code 1 and every other
``DcaForgeError`` to exit code 2.
"""


class DcaForgeError(Exception):
    """Base class for all dcaforge errors."""


class UsageError(DcaForgeError):
    """Command line could not be parsed."""


class ParameterError(DcaForgeError, ValueError):
    """A numeric parameter is out of its valid range."""


class ShapeError(DcaForgeError, ValueError):
    """Raster dimensions or channel counts do not match."""


class EmptyRegionError(DcaForgeError, ValueError):
    """Statistics were requested over a region with no pixels."""


class NoDcaDetected(DcaForgeError):
    """No dark corner artifact could be found or fitted."""


class NoBoundaryError(DcaForgeError):
    """Inpainting hole covers the entire image."""


class DataError(DcaForgeError):
    """Input file missing, unreadable or malformed, or output would clobber."""


class BatchError(DcaForgeError):
    """A batch produced no successful rows."""
