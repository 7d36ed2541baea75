"""Exception types raised across the package.

Validation errors (bad inputs that a caller could have checked) double as
``ValueError`` so that generic callers can catch them uniformly; numeric
failures double as ``ArithmeticError``.
"""


class QVEError(Exception):
    """Base class for all package errors."""


class ValidationError(QVEError, ValueError):
    """Invalid input data or parameters."""


class NumericError(QVEError, ArithmeticError):
    """A numerical procedure failed to produce a usable result."""


# -- model construction -------------------------------------------------

class AsymmetricKernel(ValidationError):
    """Kernel matrix is not symmetric within tolerance."""


class NegativeEntry(ValidationError):
    """Kernel matrix has a negative entry."""


class BadWeights(ValidationError):
    """Weights are not a strictly positive probability vector."""


class EmptyBlock(ValidationError):
    """A block of a block-constant model would be empty."""


class DimensionTooLarge(ValidationError):
    """Input exceeds the size cap of a brute-force routine."""


# -- solvers -------------------------------------------------------------

class MaxIterExceeded(NumericError):
    """Iteration budget exhausted before reaching the residual tolerance."""


class SingularJacobian(NumericError):
    """Newton linear system is singular or numerically unusable."""


class Diverged(NumericError):
    """Iteration left the admissible domain or stopped making progress."""


# -- spectral extraction --------------------------------------------------

class DegenerateTop(NumericError):
    """Top eigenvalue of the saturated operator is not isolated."""


class NotIsolated(NumericError):
    """Smallest-modulus eigenvalue of the stability operator is not isolated."""


class GapTooSmall(NumericError):
    """Spectral gap too small for the deflated linear solve."""


class SingularB(NumericError):
    """Stability operator is singular; its inverse norms are undefined."""


# -- shape analysis -------------------------------------------------------

class NoSupport(NumericError):
    """No grid point carries density above the detection threshold."""


class ZeroPsi(ValidationError):
    """Gap prediction requires a positive quadratic-form value."""


class WindowTooSmall(ValidationError):
    """Fit window contains too few grid points."""


class FitDiverged(NumericError):
    """Local shape fit failed to converge to a meaningful optimum."""


# -- perturbations ----------------------------------------------------------

class PerturbationTooLarge(ValidationError):
    """Perturbation exceeds the smallness gate of the expansion."""


class NotSmallAlpha(ValidationError):
    """Operation requires the small-density regime."""


# -- scaling ----------------------------------------------------------------

class NonPositiveInput(ValidationError):
    """A strictly positive vector was required."""
