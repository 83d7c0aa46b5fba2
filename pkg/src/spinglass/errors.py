"""Exception hierarchy with stable machine-readable error codes."""


class SpinGlassError(Exception):
    """Base class; every error carries a short stable code string."""

    code = "spinglass-error"

    def __init__(self, message=""):
        super().__init__(f"{self.code}: {message}" if message else self.code)


class DegenerateTorusError(SpinGlassError):
    code = "degenerate-torus"


class WindowTooLargeError(SpinGlassError):
    code = "window-too-large"


class EmptyWindowError(SpinGlassError):
    code = "empty-window"


class BadDistributionParameterError(SpinGlassError):
    code = "bad-distribution-parameter"


class GeometryMismatchError(SpinGlassError):
    code = "geometry-mismatch"


class EnumerationTooLargeError(SpinGlassError):
    code = "enumeration-too-large"


class McmcNotConvergedError(SpinGlassError):
    code = "mcmc-not-converged"

    def __init__(self, message="", diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NotPsdError(SpinGlassError):
    code = "not-psd"

    def __init__(self, message="", eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class AmbiguousCongruenceError(SpinGlassError):
    code = "ambiguous-congruence"

    def __init__(self, message="", triple=None):
        super().__init__(message)
        self.triple = triple


class BoundRequiresGaussianError(SpinGlassError):
    code = "bound-requires-gaussian"


class FieldCovarianceSingularError(SpinGlassError):
    code = "field-covariance-singular"


class TooFewSamplesError(SpinGlassError):
    code = "too-few-samples"


class ValidationError(SpinGlassError):
    code = "validation-error"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
