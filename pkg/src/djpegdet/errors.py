"""Exception hierarchy. Every error carries a stable machine-readable code
(the class name) so the CLI can report failures uniformly."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__


class DomainError(ToolkitError):
    """An argument lies outside its documented domain."""


class DimensionError(ToolkitError):
    """Array/patch dimensions violate a contract (e.g. not a multiple of 8)."""


class ShapeError(ToolkitError):
    """Tensor shapes are inconsistent."""


class ConfigError(ToolkitError):
    """Invalid or inconsistent model/run configuration."""


class NumericalError(ToolkitError):
    """NaN or Inf encountered where finite values are required."""


class UnsupportedMarker(ToolkitError):
    """JPEG stream uses a mode outside the supported baseline subset."""


class CorruptBitstream(ToolkitError):
    """JPEG stream is malformed (bad Huffman code, truncated segment, ...)."""


class MissingTable(ToolkitError):
    """A scan references a quantization or Huffman table that was never defined."""


class CoefficientOutOfRange(ToolkitError):
    """Coefficient magnitude exceeds what baseline entropy coding can represent."""


class SameMatrixError(ToolkitError):
    """Double compression requires two distinct quantization matrices."""


class EmptyCorpus(ToolkitError):
    """No usable raw images / patches found."""


class InsufficientQPool(ToolkitError):
    """Quantization-matrix pool too small for the requested operation."""


class EmptySplit(ToolkitError):
    """A dataset split needed by the operation contains no records."""


class DegenerateLabels(ToolkitError):
    """Metric requires at least one positive and one negative label."""
