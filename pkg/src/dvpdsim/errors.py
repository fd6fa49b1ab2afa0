"""Exception types raised by dvpdsim."""


class DvpdError(Exception):
    """Base class for all dvpdsim errors."""


class DomainError(DvpdError, ValueError):
    """An argument lies outside the domain of an analytic relation."""


class CalibrationError(DvpdError, ValueError):
    """Loss-coefficient fit is singular or physically invalid."""


class PlaneError(DvpdError, ValueError):
    """Invalid power-plane geometry or placement."""


class SolverError(DvpdError, RuntimeError):
    """Nodal solve failed (no source, singular matrix, residual too large)."""


class TraceError(DvpdError, ValueError):
    """Malformed or invalid load trace."""


class ConfigError(DvpdError, ValueError):
    """Invalid run configuration."""
