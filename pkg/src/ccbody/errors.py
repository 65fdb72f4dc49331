"""Exception types raised across the package."""


class CCBodyError(Exception):
    """Base class for all package errors."""


class DegenerateForm(CCBodyError):
    """A quadratic form is singular where a nondegenerate one is required."""


class ZeroCovector(CCBodyError):
    """A covector (or direction) vanishes where a nonzero one is required."""


class SingularPoint(CCBodyError):
    """The gradient of a defining function is too small at the query point."""


class ZeroPoint(CCBodyError):
    """The origin was passed where a nonzero point is required."""


class PreconditionError(CCBodyError):
    """An operation was called outside its documented domain."""


class IntegratorFailure(CCBodyError):
    """An ODE integration disagreed with its refinement oracle."""


class NoKernelVector(CCBodyError):
    """The obstruction system has no numerically reliable kernel vector."""


class OutOfRange(CCBodyError):
    """A query lies outside the sampled grid."""


class DivisionNearZero(CCBodyError):
    """A denominator came too close to zero."""


class InvalidSupport(CCBodyError):
    """A slice is not a valid support function."""


class GridMismatch(CCBodyError):
    """Two fields were combined on different grids."""


class GlueConvexityFailure(CCBodyError):
    """The glued field failed its convexity-in-z certificate."""


class InsufficientMargin(CCBodyError):
    """The sampled field does not extend far enough for the requested convolution."""
