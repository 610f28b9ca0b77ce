"""Exception types raised by the simulator."""


class PotmeterError(Exception):
    """Base class for all simulator errors."""


class ConfigError(PotmeterError, ValueError):
    """Invalid scenario configuration.

    ``path`` is the dotted location of the offending field, e.g. ``grid.n``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class IncommensurateMode(PotmeterError, ValueError):
    pass


class DegenerateWidth(PotmeterError, ValueError):
    pass


class GridMismatch(PotmeterError, ValueError):
    pass


class FluxMismatch(PotmeterError, ValueError):
    pass


class NotARing(PotmeterError, ValueError):
    pass


class AllMasked(PotmeterError, ArithmeticError):
    pass


class ZeroOverlap(PotmeterError, ArithmeticError):
    pass


class MaskedSite(PotmeterError, ArithmeticError):
    pass


class ZeroProbability(PotmeterError, ArithmeticError):
    pass


class ZeroCoupling(PotmeterError, ValueError):
    pass


class PointerGridTooNarrow(PotmeterError, ValueError):
    pass


class TwistOnOpenGrid(PotmeterError, ValueError):
    pass


class SolverBreakdown(PotmeterError, ArithmeticError):
    pass


class PotmeterWarning(UserWarning):
    """Non-fatal numerical caveat (truncated tails, strong coupling, large steps)."""


class PipelineError(PotmeterError):
    """A numeric failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
