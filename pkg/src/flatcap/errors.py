"""Exception types raised across the package."""


class FlatcapError(Exception):
    """Base class for all package errors."""


class DomainError(FlatcapError, ValueError):
    """Input outside the domain of a mapping (e.g. v3 <= -g)."""


class SizeError(FlatcapError, ValueError):
    """Combinatorial size guard tripped (too many generators)."""


class DegenerateError(FlatcapError, ValueError):
    """Point set or polytope without full dimension."""


class InfeasibleStart(FlatcapError):
    """No feasible full-dimensional starting point for the scaling problem."""


class ToleranceError(FlatcapError):
    """A solution left the feasible set by more than the allowed residual."""


class SolverError(FlatcapError):
    """Generic numerical failure (singular system, solver crash)."""


class QPInfeasible(FlatcapError):
    """The QP constraint set A x <= b is empty."""


class QPMaxIterations(FlatcapError):
    """Active-set iterations exhausted."""


class FallbackRateExceeded(FlatcapError):
    """The closed loop used the controller fallback on too many steps."""
