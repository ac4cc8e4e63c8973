"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible extents; message names both shapes."""


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


class DegenerateSampleError(ValueError):
    """A sample has no usable content (empty mask, empty cloud, ...)."""


class DegenerateGeometryError(ValueError):
    """Point geometry is rank-deficient for the requested fit."""


class StaleAttentionError(ValueError):
    """An attention map does not match the cache it is applied to."""


class OracleError(RuntimeError):
    """The finite-difference oracle could not evaluate the function."""


class CheckpointError(ValueError):
    """Checkpoint payload is malformed; message names the offending record."""


class IngestionError(ValueError):
    """On-disk dataset or prediction directory is missing or inconsistent."""
