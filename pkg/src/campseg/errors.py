"""Exception types shared across the pipeline."""


class CampsegError(Exception):
    """Base class for all campseg errors."""


class MalformedFile(CampsegError):
    """File violates its format: bad magic, truncated structures, overflow."""


class UnsupportedFeature(CampsegError):
    """File is valid but uses a feature outside the supported subset."""


class MissingGeoreference(CampsegError):
    """Raster carries no geo tags and no sidecar world file."""


class IoFailure(CampsegError):
    """Underlying I/O operation failed."""


class VersionMismatch(CampsegError):
    """Checkpoint archive written by an incompatible format version."""


class RegionTooSmall(CampsegError):
    """Region shorter than the requested patch size."""


class ConfigInvalid(CampsegError):
    """Configuration violates an invariant."""


class IndivisibleDimensions(CampsegError):
    """Raster dimensions are not divisible by the requested factor."""


class IndivisibleChannels(CampsegError):
    """Channel count is not divisible by the shuffle factor squared."""


class ShapeMismatch(CampsegError):
    """Operand shapes are incompatible."""


class GraphMissing(CampsegError):
    """backward() called on a tensor with no recorded computation."""


class MissingGrad(CampsegError):
    """Optimizer step requested but an unfrozen parameter has no gradient."""


class NonBinaryInput(CampsegError):
    """Mask contains values other than 0 and 255."""


class UndefinedMetric(CampsegError):
    """Metric denominator is zero; the value does not exist."""


class DegenerateRing(CampsegError):
    """Simplification would reduce a ring below a valid vertex count."""


class EmptyDataset(CampsegError):
    """Training or validation patch set is empty."""
