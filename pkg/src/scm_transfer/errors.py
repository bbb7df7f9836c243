"""Exception and warning types shared across the package."""


class ScmTransferError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateInput(ScmTransferError, ValueError):
    """Geometric input is collinear, too small, or otherwise degenerate."""


class OutOfDomain(ScmTransferError, ValueError):
    """An argument lies outside the domain of the function."""


class NonConvergence(ScmTransferError, RuntimeError):
    """An iterative solver exhausted its budget without meeting tolerance."""


class QuadratureFailure(ScmTransferError, RuntimeError):
    """Adaptive subdivision exceeded its depth limit."""


class OutsideSourcePolygon(ScmTransferError, ValueError):
    """A point to be transferred is not strictly inside the source polygon."""


class InconsistentMotion(ScmTransferError, ValueError):
    """An observed transition cannot be explained by a unicycle step."""


class DegenerateNormalization(ScmTransferError, ValueError):
    """A normalized coordinate is too close to zero to divide by."""


class EmptyLibrary(ScmTransferError, ValueError):
    """No motion primitive survived pruning."""


class Infeasible(ScmTransferError, RuntimeError):
    """The optimal control problem has no solution satisfying hard constraints."""


class ConfigError(ScmTransferError, ValueError):
    """A scenario configuration is malformed or inconsistent."""


class CrowdingWarning(UserWarning):
    """Strip prevertices are so close that they are numerically indistinguishable."""
