"""Exception types raised across the package."""


class BirkhoffError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class NegativeCellError(BirkhoffError):
    pass


class NotApplicableError(BirkhoffError):
    """A swap produced something that is not a dataset."""


class PreconditionError(BirkhoffError):
    pass


class NonterminationError(BirkhoffError):
    """A swap process exceeded its step bound. Signals a bug, not bad input."""


class FiberMismatchError(BirkhoffError):
    pass


class CompatibilityError(BirkhoffError):
    pass


class TooLargeError(BirkhoffError):
    pass


class UnsupportedError(BirkhoffError):
    pass


class NonconvergenceError(BirkhoffError):
    pass
