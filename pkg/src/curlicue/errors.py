"""Exception types shared across the package."""


class CurlicueError(Exception):
    """Base class for all package errors."""


class DomainError(CurlicueError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ExhaustedError(CurlicueError, ArithmeticError):
    """A finite expansion ran out before the requested depth."""


class DenominatorBudgetError(ExhaustedError):
    """The expansion of a rational ended before its R-denominators exceeded N."""


class BudgetError(CurlicueError, RuntimeError):
    """A summation would exceed its configured cost ceiling."""


class InvariantError(CurlicueError, AssertionError):
    """An internal dual-route cross-check disagreed."""


class SkipRateError(CurlicueError, RuntimeError):
    """Too many Monte Carlo samples were skipped for the result to be trusted."""
