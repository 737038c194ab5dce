"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: validation problems exit 2, deadlock and
infeasibility exit 3, anything else exits 4.
"""


class SynthesisError(Exception):
    """Base class for all toolchain errors."""

    exit_code = 4


class ValidationError(SynthesisError):
    """Malformed input: schema violations, broken invariants, bad arguments."""

    exit_code = 2


class FormatError(ValidationError):
    """A file failed to parse or match its schema. Carries a locus string."""

    def __init__(self, message, locus=None):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class InconsistentRatesError(ValidationError):
    """No positive repetition vector exists; names a violating channel cycle."""

    def __init__(self, message, cycle=()):
        self.cycle = tuple(cycle)
        super().__init__(message)


class RateOverflowError(ValidationError):
    """A scaled port rate exceeded the configured maximum."""


class UnsupportedActivationError(ValidationError):
    """ANN conversion was asked for an activation other than ReLU."""


class DeadlockError(SynthesisError):
    """A strongly connected subgraph cannot complete an iteration."""

    exit_code = 3

    def __init__(self, message, actors=()):
        self.actors = tuple(sorted(actors))
        super().__init__(message)


class SimulationDeadlockError(DeadlockError):
    """The simulator stalled at run time; unreachable if analysis passed."""


class CapacityError(SynthesisError):
    """An actor's single-firing token production exceeds a tile buffer."""

    exit_code = 3


class FitError(SynthesisError):
    """A cluster does not fit the crossbar of the tile it was mapped to."""

    exit_code = 3


class InfeasibleError(SynthesisError):
    """No feasible solution exists (or was found within the retry budget)."""

    exit_code = 3


class NoPeriodError(SynthesisError):
    """Self-timed execution found no periodic phase within the budget."""

    exit_code = 3
