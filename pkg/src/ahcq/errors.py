"""Exception types shared across the toolkit."""


class AhcqError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(AhcqError):
    """Tensor dimensions do not match what an operation requires."""


class DomainError(AhcqError):
    """Input values outside an operation's domain (empty tensor, non-finite data)."""


class FormatError(AhcqError):
    """Malformed binary container or text artifact."""


class ParameterError(AhcqError):
    """Invalid quantizer / search / schedule parameters."""


class ConfigError(AhcqError):
    """Invalid experiment or hardware configuration."""


class SimulationError(AhcqError):
    """Datapath simulation received inconsistent codes or configs."""


class DivergenceError(AhcqError):
    """Reconstruction loss exploded past the abort threshold."""
