"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: parameter/domain problems are "2",
precision failures "3", and a failed certificate is a value, not an
exception (CLI exit "1").
"""


class FoliationLabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FoliationLabError):
    """An input point or parameter lies outside its documented domain."""


class ParameterError(FoliationLabError):
    """No admissible parameter exists, or a supplied one is infeasible."""


class PrecisionError(FoliationLabError):
    """A quadrature or root-finding self-check exceeded its drift budget."""


class CorruptFoliationError(FoliationLabError):
    """An invariant of a foliation (monotonicity, positive widths) failed.

    Signals a bug or a deliberately broken fixture upstream, never a
    tolerance issue.
    """
