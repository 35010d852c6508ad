"""Exception types shared across the package."""


class FaultromError(Exception):
    """Base class for all package errors."""


class MeshFormatError(FaultromError):
    """Malformed or inconsistent mesh document."""


class GeometryError(FaultromError):
    """Geometric inconsistency (inverted cell, zero overlap, ...)."""


class ConfigError(FaultromError):
    """Invalid configuration or parameter values."""


class NumericalError(FaultromError):
    """Numerical failure (singular system, residual out of tolerance, ...)."""
