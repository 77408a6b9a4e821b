"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto stable process exit statuses.
"""


class DplqgError(Exception):
    exit_code = 1


class DimensionError(DplqgError, ValueError):
    exit_code = 3


class SymmetryError(DimensionError):
    exit_code = 3


class DefinitenessError(DplqgError, ValueError):
    exit_code = 3


class DomainError(DplqgError, ValueError):
    exit_code = 3


class PreconditionError(DplqgError, ValueError):
    exit_code = 3


class ControllabilityError(PreconditionError):
    exit_code = 3


class SingularMatrixError(DplqgError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ConvergenceError(DplqgError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleError(DplqgError, ValueError):
    exit_code = 5


class ScenarioError(DplqgError, ValueError):
    """Problem with a scenario document; names the offending section and key."""

    exit_code = 2

    def __init__(self, message, section=None, key=None):
        where = ".".join(str(p) for p in (section, key) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)
        self.section = section
        self.key = key


class ScenarioValidationError(ScenarioError):
    exit_code = 3
