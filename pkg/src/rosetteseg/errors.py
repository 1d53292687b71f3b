"""Exception hierarchy shared across the pipeline stages."""


class RosetteSegError(Exception):
    """Base class for all pipeline errors."""


class SchemaError(RosetteSegError):
    """Input file or in-memory object violates the interchange schema."""


class ConfigError(RosetteSegError):
    """Invalid pipeline or generator configuration."""


class MaskAlgebraError(RosetteSegError):
    """Undefined mask operation, e.g. IoU of two empty masks."""


class DegenerateAttentionError(RosetteSegError):
    """Attention map carries no usable signal (zero or constant values)."""


class StemMissError(RosetteSegError):
    """Fitted stem line does not intersect the leaf mask."""


class SpecInfeasibleError(RosetteSegError):
    """Synthetic scene spec cannot be satisfied by rejection sampling."""


class InternalConsistencyError(RosetteSegError):
    """A pipeline-internal invariant was violated; indicates a bug."""
