"""Exception types shared across the package."""


class FreeOutliersError(Exception):
    """Base class for all package errors."""


class MeasureError(FreeOutliersError, ValueError):
    """Invalid measure specification.

    ``code`` is one of ``invalid-weights``, ``off-carrier-atom``,
    ``negative-variance-family`` or ``unknown-family``.
    """

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


class EvaluationOnSupportError(FreeOutliersError, ValueError):
    """A transform was evaluated at (or within 1e-12 of) the support."""


class EtaUndefinedError(FreeOutliersError, ValueError):
    """The eta transform has a pole (1 + psi = 0) at the requested point."""


class ConvergenceError(FreeOutliersError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    ``residual`` holds the last residual, ``index`` the offending grid index
    when the failure happened inside a vectorised evaluation.
    """

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class ZeroFirstMomentError(FreeOutliersError, ValueError):
    """A multiplicative convolution input has zero first moment."""


class BoundaryError(FreeOutliersError, ValueError):
    """Boundary continuation failed.

    ``code`` is ``too-close-to-support``, ``ladder-non-convergence``,
    ``stencil-leaves-gap`` or ``inconsistent-extrapolation``.
    """

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


class ModelError(FreeOutliersError, ValueError):
    """Invalid spiked model or matrix input (``code`` says which rule failed)."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


class ConfigError(FreeOutliersError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))
