"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration budget.

    Attributes
    ----------
    residual : float
        Defect of the last iterate.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = float(residual)
        self.iterations = int(iterations)
