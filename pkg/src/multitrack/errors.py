"""Exception types shared across the package."""


class MultiTrackError(Exception):
    """Base class for all package errors."""


class CapacityViolation(MultiTrackError):
    """Aggregate load at some tracker reached or exceeded its capacity guard."""


class NoSuchEdge(MultiTrackError):
    """A (from, to) pair outside the topology's edge set was addressed."""


class Infeasible(MultiTrackError):
    """No assignment keeps every aggregate load inside the capacity guard."""


class StepCollapse(MultiTrackError):
    """Integrator step halving hit dt_min without finding a feasible step."""


class MaxIterations(MultiTrackError):
    """An iterative solver exhausted its iteration budget."""


class InnerNotConverged(MultiTrackError):
    """The nested splitting dynamics failed to reach equilibrium."""


class TooLarge(MultiTrackError):
    """Instance exceeds the combinatorial guard of the brute-force solver."""


class ParseError(MultiTrackError):
    """Scenario file is not syntactically valid."""


class ValidationError(MultiTrackError):
    """Scenario file is well-formed but violates schema rules.

    Carries every violation found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SchemaError(MultiTrackError):
    """A CSV handed to the plotter lacks the expected columns or rows."""
