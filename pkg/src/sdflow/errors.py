"""Exception hierarchy shared by all sdflow modules."""


class SdflowError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(SdflowError):
    """A model/device/design/config file is malformed."""


class ShapeMismatch(SdflowError):
    """A declared tensor shape contradicts the layer arithmetic."""


class CycleError(SdflowError):
    """The layer graph contains a cycle."""


class DanglingArc(SdflowError):
    """An arc references a layer id that does not exist."""


class IllegalParallelism(SdflowError):
    """A stream or MAC parallelism value is out of range or not a divisor."""


class DisconnectedGraph(SdflowError):
    """A partition's layers do not form a single connected component."""


class StreamMismatch(SdflowError):
    """Producer/consumer stream widths differ and adapters are disabled."""


class NonReconvergentBranch(SdflowError):
    """A branch crosses a partition boundary without reconverging."""


class DivisionByZeroRate(SdflowError):
    """An arc carries workload but has a zero rate entry."""


class NotEnoughLegalCuts(SdflowError):
    """Fewer legal cut positions exist than requested reconfiguration points."""


class IllegalMove(SdflowError):
    """A partition move would empty a partition or break cut legality."""


class NoFeasibleDesign(SdflowError):
    """The search finished without any resource-feasible design point."""

    def __init__(self, message, least_violating=None):
        super().__init__(message)
        self.least_violating = least_violating


class DeadlockDetected(SdflowError):
    """The token-flow simulation made no progress with tokens outstanding."""
