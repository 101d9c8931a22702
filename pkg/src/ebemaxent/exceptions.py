"""Exception hierarchy shared by the solver modules."""


class EbeError(Exception):
    """Base class for errors raised by this package."""


class DomainError(EbeError, ValueError):
    """A point lies outside the hypercube ``[-1, 1]^d``."""


class ResourceLimitError(EbeError):
    """A quadrature rule would exceed the configured node cap."""


class EvaluationError(EbeError):
    """An integrand produced a non-finite value at a quadrature node."""

    def __init__(self, message, node_index=None, node=None):
        super().__init__(message)
        self.node_index = node_index
        self.node = node


class ExponentOverflow(EvaluationError):
    """The polynomial exponent exceeded the overflow guard at some node."""

    def __init__(self, node_index, node, exponent, limit):
        super().__init__(
            f"exponent {exponent:.6g} exceeds {limit:g} at node {node_index} ({list(map(float, node))})",
            node_index,
            node,
        )
        self.exponent = exponent
        self.limit = limit


class SingularMatrix(EbeError, ArithmeticError):
    """Dense solve refused because the pivot ratio fell below threshold."""

    def __init__(self, indicator, threshold):
        super().__init__(f"matrix is numerically singular (pivot ratio {indicator:.3e} < {threshold:.1e})")
        self.indicator = indicator
        self.threshold = threshold


class ZeroDerivative(EbeError, ArithmeticError):
    pass


class NoConvergence(EbeError):
    pass


class Diverged(EbeError):
    """The full-system Newton baseline failed; ``reason`` says how."""

    def __init__(self, reason, iterations=0, lam=None, residual_norm=float("nan")):
        super().__init__(reason)
        self.reason = reason
        self.iterations = iterations
        self.lam = lam
        self.residual_norm = residual_norm


class DegenerateAxis(EbeError, ValueError):
    """A sample coordinate is constant, so no affine map to [-1, 1] exists."""
