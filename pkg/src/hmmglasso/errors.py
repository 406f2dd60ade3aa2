"""Exception hierarchy shared across the package."""


class HmmGlassoError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HmmGlassoError, ValueError):
    """Array shapes do not agree."""


class DegenerateStateError(HmmGlassoError, FloatingPointError):
    """A state's emission density could not be evaluated to a finite value."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SingularCovarianceError(HmmGlassoError, FloatingPointError):
    """A (weighted) empirical covariance cannot be inverted."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class GlassoConvergenceError(HmmGlassoError, RuntimeError):
    """The graphical lasso solver hit its iteration cap.

    The last iterate is kept on ``precision`` so callers can inspect it.
    """

    def __init__(self, message, precision=None, n_iter=None):
        super().__init__(message)
        self.precision = precision
        self.n_iter = n_iter


class FitError(HmmGlassoError, FloatingPointError):
    """EM produced a non-finite log-likelihood."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DataFormatError(HmmGlassoError, ValueError):
    """An input table is empty, ragged or holds a non-numeric cell."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
