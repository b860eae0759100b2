"""Exception types shared across the package."""


class KahlerLabError(Exception):
    pass


class NonPositiveMetric(KahlerLabError):
    """The potential left the Kahler cone."""

    def __init__(self, point, min_eigenvalue):
        self.point = point
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(f"metric not positive at {point}: min eigenvalue {self.min_eigenvalue:.3e}")


class NonConvexPotential(NonPositiveMetric):
    pass


class KernelPreconditionViolated(KahlerLabError):
    pass


class NoConvergence(KahlerLabError):
    def __init__(self, iterations, last_residual, message="Newton iteration did not converge"):
        self.iterations = iterations
        self.last_residual = float(last_residual)
        super().__init__(f"{message} after {iterations} iterations (residual {self.last_residual:.3e})")


class PathTruncated(KahlerLabError):
    def __init__(self, last_good_t, records=None):
        self.last_good_t = last_good_t
        self.records = list(records or [])
        super().__init__(f"continuation stopped; last accepted t = {last_good_t}")


class UnsupportedTwist(KahlerLabError):
    pass


class RootBracketFailure(KahlerLabError):
    pass


class LineSearchDiverged(KahlerLabError):
    pass


class NotExtremal(KahlerLabError):
    pass


class GridMismatch(KahlerLabError, ValueError):
    pass


class KernelDriftWarning(UserWarning):
    pass
