"""Exception hierarchy.

Every numerical failure derives from :class:`NumericalError` and carries the
name of the operation that raised it, so the CLI can report it verbatim.
"""


class NumericalError(Exception):
    def __init__(self, operation: str, message: str):
        super().__init__(f"{operation}: {message}")
        self.operation = operation


class SingularMetricError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    """Constraint rows are linearly dependent at the queried point."""


class CompatibilityError(NumericalError):
    """The compatibility matrix J G J^t is numerically singular."""


class TransversalityError(NumericalError):
    """The constraint system is not transversal to the critical surface."""


class UndecidedError(NumericalError):
    """The admissible-sequence search hit its iteration cap."""


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit status 2)."""
