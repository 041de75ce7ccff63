"""Exception hierarchy shared by all podhta modules."""


class PodHtaError(Exception):
    """Base class for every failure raised by this package."""


class SVDConvergenceError(PodHtaError):
    """The Jacobi sweeps did not reach orthogonality within the sweep cap."""

    def __init__(self, sweeps, off_norm):
        super().__init__(f"Jacobi SVD not converged after {sweeps} sweeps (max off-diagonal cosine {off_norm:.3e})")
        self.sweeps = sweeps
        self.off_norm = off_norm


class SingularMatrixError(PodHtaError):
    """LU factorisation met a pivot below the singularity threshold."""

    def __init__(self, pivot_index, pivot_value):
        super().__init__(f"matrix is singular to working precision at pivot {pivot_index} (|u_kk| = {pivot_value:.3e})")
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class RodCollapseError(PodHtaError):
    """A rod was compressed to (numerically) zero length."""

    def __init__(self, rod_index):
        super().__init__(f"rod {rod_index} collapsed to zero length")
        self.rod_index = rod_index


class NotConvergedError(PodHtaError):
    """A simulation result that did not converge was used where a converged one is required."""


class RankError(PodHtaError):
    """Requested more modes than the snapshot data supports."""

    def __init__(self, requested, achievable):
        super().__init__(f"requested {requested} modes but the numerical rank is {achievable}")
        self.requested = requested
        self.achievable = achievable


class WindowError(PodHtaError):
    """APOD window larger than the snapshot database."""


class ZeroMatrixError(PodHtaError):
    """Cross approximation found no nonzero entry (rank-0 matrix)."""


class HTConstructionError(PodHtaError):
    """Generalised cross approximation failed at a tree node."""

    def __init__(self, node, reason):
        super().__init__(f"HTA construction failed at node {node}: {reason}")
        self.node = node


class HTFormatError(PodHtaError):
    """Malformed or truncated HT / snapshot file."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class SizeGuardError(PodHtaError):
    """Dense assembly refused because the tensor is too large."""


class ModelEvaluationError(PodHtaError):
    """A model evaluation failed inside a sampling loop."""

    def __init__(self, index, cause):
        super().__init__(f"model evaluation failed at index {tuple(index)}: {cause}")
        self.index = tuple(index)
        self.cause = cause
