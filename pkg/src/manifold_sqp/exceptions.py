"""Exception hierarchy shared by the geometry, linear algebra and solver layers."""


class ManifoldSQPError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ManifoldSQPError, ValueError):
    """A point lies outside the domain where a map is invertible or defined."""


class RankDeficient(ManifoldSQPError):
    """The constraint Jacobian is not surjective (numerically)."""


class IndefiniteOnKernel(ManifoldSQPError):
    """The (1,1) block of a saddle-point system is not positive definite on ker C."""


class UnboundedRegularization(ManifoldSQPError):
    """Hessian regularization did not certify positive definiteness."""


class UpdateNotDefined(ManifoldSQPError):
    """A step left the domain of the update retraction."""


class DegenerateDenominator(ManifoldSQPError):
    """Predicted model decrease vanished for a nonzero tangential damping factor."""


class SolveFailed(ManifoldSQPError):
    """A solver loop stopped without meeting its termination criterion.

    The partial result (iterate and history) is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class MaxIterExceeded(SolveFailed):
    pass


class StallDetected(SolveFailed):
    pass
