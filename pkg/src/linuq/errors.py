"""Exception types raised across the package."""


class LinuqError(Exception):
    """Base class for all package errors."""


class CholeskyFailure(LinuqError):
    """Noise covariance is not positive definite (invalid problem)."""


class SingularSystem(LinuqError):
    """Regularized normal matrix is numerically singular (corrupt input)."""


class InfeasibleConstraints(LinuqError):
    """The affine constraint set {x : Ax <= b} is empty."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class UnboundedFunctional(LinuqError):
    """h'x is unbounded over the feasible set (null-space direction not
    controlled by the constraints)."""


class SolverStall(LinuqError):
    """Interior-point iteration cap reached before tolerances were met."""


class CertificateUnavailable(LinuqError):
    """Dual certificate extraction failed its verification tolerance."""


class RankDeficient(LinuqError):
    """Operation requires a full-column-rank operator."""


class EmptyConfidenceSet(LinuqError):
    """The data ball excludes the entire constraint set (can occur in
    simultaneous mode when the minimum residual exceeds the chi-square
    radius)."""


class AssemblyNotPSD(LinuqError):
    """Spatial cross-covariance assembly needed more jitter than the cap
    allows (inconsistent smoothness/range inputs)."""


class BudgetMismatch(LinuqError):
    """Calibration plan components do not sum to the total error budget."""
