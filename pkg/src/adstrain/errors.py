"""Exception types shared across the package."""


class AdsTrainError(Exception):
    """Base class for all package errors."""


class InvalidArgument(AdsTrainError, ValueError):
    pass


class NotFound(AdsTrainError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class ConstraintViolation(AdsTrainError):
    """A plan would break a hard constraint (e.g. column-splitting a row-wise optimizer table)."""


class Infeasible(AdsTrainError):
    """No plan satisfies the memory constraints.

    ``deficits`` maps node index to bytes over capacity for the closest plan tried.
    """

    def __init__(self, message, deficits=None):
        super().__init__(message)
        self.deficits = dict(deficits or {})


class SearchSpaceTooLarge(AdsTrainError):
    def __init__(self, size, limit):
        super().__init__(f"search space of {size:.3g} candidate plans exceeds limit {limit:.3g}")
        self.size = size
        self.limit = limit


class InvalidGraph(AdsTrainError, ValueError):
    pass


class MissingInput(AdsTrainError, KeyError):
    def __init__(self, field):
        super().__init__(field)
        self.field = field

    def __str__(self):
        return f"missing raw field {self.field!r}"


class Unsupported(AdsTrainError):
    pass


class Divergence(AdsTrainError, ArithmeticError):
    def __init__(self, step, arm):
        super().__init__(f"non-finite loss at step {step} ({arm} arm)")
        self.step = step
        self.arm = arm


class ScenarioError(AdsTrainError, ValueError):
    """Scenario validation failure; ``problems`` lists offending fields."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
