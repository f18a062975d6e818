"""Exception types shared across the pipeline."""


class LayoutMuseError(Exception):
    """Base class for all errors raised by this package."""


class DecodeError(LayoutMuseError):
    """A raster file could not be decoded."""


class DimensionMismatch(LayoutMuseError):
    """Paired rasters do not share the same pixel dimensions."""


class NoRegions(LayoutMuseError):
    """No saliency pixel reaches the segmentation threshold."""


class EmptyBag(LayoutMuseError):
    """A feature bag with zero regions was passed where one is required."""


class FormatError(LayoutMuseError):
    """A serialized file does not follow its documented format."""


class LengthError(FormatError):
    """A stored feature vector does not have the expected width."""


class CardinalityMismatch(LayoutMuseError):
    """Two collections that must pair up item-for-item have different sizes."""


class DuplicatePoints(LayoutMuseError):
    """Triangulation input contains coincident points."""


class WidthMismatch(LayoutMuseError):
    """Embedding matrices with different widths cannot be compared."""


class EmptyCorpus(LayoutMuseError):
    """A corpus manifest yielded no usable drawings."""


class ShapeMismatch(LayoutMuseError):
    """Tensor shapes are incompatible for the requested operation."""


class NonScalarOutput(LayoutMuseError):
    """backward() requires a scalar output tensor."""


class UnsupportedSecondOrder(LayoutMuseError):
    """An op on the differentiation path has no second-order rule."""


class NonFiniteValue(LayoutMuseError):
    """A tensor op produced NaN or Inf."""


class AnchorOutOfRange(LayoutMuseError):
    """Anchor count outside the supported 1..13 range."""


class NoEnabledRegions(LayoutMuseError):
    """Layout generation requires at least one enabled region."""
