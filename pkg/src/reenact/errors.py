"""Exception and warning types shared across the package.

The CLI maps :class:`IngestError` (and subclasses) to exit code 3 and every
other :class:`PipelineError` to exit code 2.
"""


class PipelineError(Exception):
    """Base class for all validation and processing errors."""


class DimensionError(PipelineError):
    """Operands have incompatible shapes or lengths."""


class DegenerateModelError(PipelineError):
    """Morphable model geometry cannot support the requested operation."""


class DegenerateConfigError(PipelineError):
    """Point configuration is rank-deficient (collinear/coplanar/too few)."""


class EmptyInputError(PipelineError):
    """An operation requiring at least one element received none."""


class EmptyMaskError(PipelineError):
    """A masked reduction was requested but no pixel is selected."""


class InvalidFeatureError(PipelineError):
    """Feature matrix contains non-finite values or too few samples."""


class CorruptMaskError(PipelineError):
    """Visibility mask references a triangle outside the topology."""


class OutOfFrameError(PipelineError):
    """Crop box does not overlap the frame at all."""


class TargetExhaustedError(PipelineError):
    """Target sequence is shorter than the source it must pace."""


class IngestError(PipelineError):
    """Input files are missing, gapped, or structurally invalid."""


class ModelLoadError(IngestError):
    """Morphable model directory failed structural or numeric validation."""


class GimbalLockWarning(UserWarning):
    """Pitch is at +/-90 degrees; roll was pinned to zero."""


class ConvergenceWarning(UserWarning):
    """Iterative fit hit its iteration cap; best iterate returned."""


class SubPixelEyeWarning(UserWarning):
    """Eye polygon covers no pixel center; vertex centroid returned."""


class ClipWarning(UserWarning):
    """Drawing coordinates fell outside the canvas and were clipped."""
