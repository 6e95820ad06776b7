"""Exception types shared across the package."""


class PitfinderError(Exception):
    """Base class for all pitfinder-specific failures."""


class RasterFormatError(PitfinderError, ValueError):
    """Unreadable, unsupported, or malformed raster file."""


class EmptySelectionError(PitfinderError, ValueError):
    """An operation received no usable pixels or points."""


class DegenerateGeometryError(PitfinderError, ValueError):
    """Sample geometry leaves the fitted linear system singular."""


class FlatEnergyError(PitfinderError, ValueError):
    """Roll-angle energy is constant over the search range (no roll signal)."""


class UnidentifiableModelError(PitfinderError, ValueError):
    """Fitted road-disparity slope is too close to zero to recover the model."""


class DegenerateHistogramError(PitfinderError, ValueError):
    """Histogram has mass in fewer than two bins; no threshold exists."""


class InsufficientPointsError(PitfinderError, ValueError):
    """Fewer points than unknowns (or than the RANSAC minimal sample)."""


class NoConsensusError(PitfinderError, ValueError):
    """RANSAC found no inlier set large enough to trust."""


class FrameMismatchError(PitfinderError, ValueError):
    """Surface frame does not match the data representation."""


class DimensionMismatchError(PitfinderError, ValueError):
    """Two rasters that must share dimensions do not."""


class EmptyRoadMaskError(PitfinderError, ValueError):
    """Thresholding left too few road pixels to fit a surface."""


class DatasetLayoutError(PitfinderError, ValueError):
    """Unknown dataset layout name or malformed dataset directory."""
