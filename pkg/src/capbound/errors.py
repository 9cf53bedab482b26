"""Exception hierarchy.

Two families matter to callers: :class:`InfeasibleConstraints` (the constraint
body is empty or contradictory) and :class:`NumericalError` (a computation
failed to converge or left its domain). The CLI maps them to exit codes 2 and 3.
"""


class CapboundError(Exception):
    """Base class for every error raised by this package."""


class InfeasibleConstraints(CapboundError):
    """The constraint set admits no input vectors (or no finite log-partition)."""


class EmptySupport(InfeasibleConstraints):
    pass


class Infeasible(InfeasibleConstraints):
    pass


class Unbounded(InfeasibleConstraints):
    """A dual objective decreases without bound."""


class NumericalError(CapboundError):
    pass


class DivergentIntegral(NumericalError):
    """A partition-type integral is infinite (the dual point lies outside its domain)."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class NonFinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class WindowMismatch(CapboundError, ValueError):
    pass


class UnsupportedKernel(CapboundError, ValueError):
    pass


class NonPositiveTestFunction(CapboundError, ValueError):
    pass


class ZeroLeadingTap(CapboundError, ValueError):
    pass


class NoBoundingBox(CapboundError, ValueError):
    pass


class ZeroHits(NumericalError):
    pass


class ScenarioError(CapboundError, ValueError):
    """A scenario file does not match the schema."""
