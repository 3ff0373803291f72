"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when an argument violates an operation's precondition."""


class NotFound(RuntimeError):
    """Raised when an iterative search ends without an accepted answer."""


class FlowDiverged(RuntimeError):
    """Raised when a flow produces non-finite values.

    ``trace`` holds the rows recorded up to the last finite state.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
