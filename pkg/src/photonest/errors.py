"""Package-level error types."""


class NumericalFailure(RuntimeError):
    """A computation failed its internal accuracy or stability gate.

    Raised by the Fisher derivative-step (Richardson) check and by the
    iterative estimator when an update leaves its trust region. The CLI
    maps this to exit status 2.
    """
