# ============================================================
# ChaosBound — Error hierarchy
# Hard failures raise one of these; soft conditions (adaptive
# non-convergence, Sinkhorn stalls) travel as flags instead.
# ============================================================


class ChaosBoundError(Exception):
    """Base class for every error raised by the engine."""


class DimensionError(ChaosBoundError, ValueError):
    """Points, vectors or matrices disagree with the space dimension."""


class GridCapError(ChaosBoundError):
    """A tensor quadrature grid would exceed the configured node cap."""


class NonFiniteValueError(ChaosBoundError, ArithmeticError):
    """A field produced NaN or inf at a quadrature node or stencil point."""


class DensityError(ChaosBoundError, ValueError):
    """Invalid density model parameters."""


class NegativeDensityError(DensityError):
    """A density took a negative value at a probed point."""


class MatrixError(ChaosBoundError, ValueError):
    """A matrix is not square, not symmetric or not positive semidefinite."""


class SolverError(ChaosBoundError):
    """A transport solver could not produce a usable solution."""


class NonInjectiveMapError(SolverError):
    """Inverting a transport map failed (no bracket, singular linear part)."""


class MeasureError(ChaosBoundError, ValueError):
    """Invalid positive measure (empty atom list, non-positive weights)."""


class ConfigError(ChaosBoundError, ValueError):
    """Malformed or inconsistent scenario configuration."""
