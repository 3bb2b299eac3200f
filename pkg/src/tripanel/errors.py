"""Exceptions shared across the package."""


class TripanelError(Exception):
    """Base class for errors raised by this package."""


class DivergentIntegral(TripanelError, ArithmeticError):
    """The requested integral does not exist (target on the open panel).

    Raised by the closed-form paths when the flat-panel kernel is strongly
    singular, e.g. the constant moment with c = 0 and the radial decomposition
    starting at r = 0.  Callers should route such configurations to the
    quadratic-surface path instead.
    """


class DegenerateTriangle(TripanelError, ValueError):
    """A triangle (input or projected) has (numerically) zero area."""


class MeshError(TripanelError, ValueError):
    """A surface mesh violates a structural invariant."""


class ConvergenceFailure(TripanelError, RuntimeError):
    """An iterative procedure (e.g. foot-point projection) did not converge."""
