"""Exception hierarchy shared across the package.

Semantics matter for the CLI exit-code contract: input problems map to exit
code 1, mathematical infeasibility (including framework violations) to 2,
and solver non-convergence to 3.
"""


class EtestError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EtestError, ValueError):
    """Malformed or out-of-contract input (schema, ranges, flags)."""


class ModelMismatchError(InvalidInputError):
    """Two models that must share one outcome set do not."""


class ExistenceFailureError(EtestError):
    """No feasible optimizer was found within the searched bracket.

    Raised when the multiplier bracket search exhausts its doublings; the
    sufficient condition is boundedness of x * U'(x), so callers working
    with an unbounded marginal utility may see this for perfectly sensible
    models.  It reports search failure, not a proof of nonexistence.
    """


class FrameworkViolationError(EtestError):
    """A request outside the supported optimization framework.

    Examples: a level-0 problem with a power exponent in (0, 1], or the
    linear utility where a strictly decreasing derivative is required.
    """


class NonConvergenceError(EtestError):
    """An iterative solver failed to reach its tolerance."""
