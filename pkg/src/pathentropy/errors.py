"""Exception hierarchy shared by all modules."""


class PathEntropyError(Exception):
    """Base class for domain failures (CLI exit code 1)."""

    code = "ERROR"


class InvalidSystemError(PathEntropyError, ValueError):
    code = "INVALID_SYSTEM"

    def __init__(self, report):
        self.report = report
        lines = "; ".join(str(v) for v in report.violations)
        super().__init__(f"invalid compartmental system: {lines}")


class SingularMatrixError(PathEntropyError, ArithmeticError):
    code = "SINGULAR"


class NegativeSteadyStateError(PathEntropyError, ValueError):
    code = "NEGATIVE_STEADY_STATE"


class ZeroInputError(PathEntropyError, ValueError):
    code = "ZERO_INPUT"


class NotADistributionError(PathEntropyError, ValueError):
    code = "NOT_A_DISTRIBUTION"


class NonpositiveRateError(PathEntropyError, ValueError):
    code = "NONPOSITIVE_RATE"


class MaxJumpsExceeded(PathEntropyError, RuntimeError):
    code = "MAX_JUMPS_EXCEEDED"


class EmptyFeasibleSetError(PathEntropyError, ValueError):
    code = "EMPTY_FEASIBLE_SET"


class NonpositiveTargetError(PathEntropyError, ValueError):
    code = "NONPOSITIVE_TARGET"


class InvalidEfficiencyError(PathEntropyError, ValueError):
    code = "INVALID_EFFICIENCY"
