"""Exception hierarchy for the segmentation pipeline."""


class EchoPathError(Exception):
    """Base class for all pipeline errors."""


class InvalidUIPError(EchoPathError):
    """The three input points are degenerate (collinear, coincident, or off-frame)."""


class DegenerateContrastError(EchoPathError):
    """Contrast-enhancement reference levels collapsed (I2 <= I1)."""


class DimensionError(EchoPathError):
    """Input grid smaller than the operation requires, or grids mismatch."""


class InvalidCenterError(EchoPathError):
    """Polar unwrap center lies outside the frame."""


class EmptyGraphError(EchoPathError):
    """No intensity peaks found anywhere in the polar image."""


class WindowTooTightError(EchoPathError):
    """Boundary-initialization window left one half of the sweep without nodes."""


class AnchorNodeError(EchoPathError):
    """No candidate nodes near an apex or mitral-annulus anchor."""


class NoPathError(EchoPathError):
    """End node unreachable from the start node."""


class HalfFailureError(EchoPathError):
    """Every theta-distance-limit iteration failed for one boundary half."""


class FrameFailureError(EchoPathError):
    """A frame could not be segmented either initialized or uninitialized."""


class StartSelectionError(EchoPathError):
    """All candidate start frames failed to segment."""


class FlatVolumeError(EchoPathError):
    """Across-beat mean EDV equals mean ESV; correction targets undefined."""


class DegenerateBandError(EchoPathError):
    """Inner and outer boundaries coincide; relative position undefined."""


class GeometryError(EchoPathError):
    """Contour geometry invalid (e.g. self-intersecting)."""


class InsufficientDataError(EchoPathError):
    """Too few data points for the requested statistic."""


class InfiniteCnrError(EchoPathError):
    """Both region variances are zero; CNR unbounded."""


class PhantomSpecError(EchoPathError):
    """Phantom specification invalid or its target CNR unreachable."""


class HarnessError(EchoPathError):
    """Monte-Carlo harness failure rate exceeded the tolerated fraction."""
