"""Exception types shared across the package.

Two families matter for exit codes: DomainError (bad inputs or
configuration, CLI exit 1) and NumericError (a computation failed to
converge or produced garbage, CLI exit 2).
"""


class DomainError(ValueError):
    """Input violates a documented precondition."""


class DegenerateColumnError(DomainError):
    """A design column is constant and cannot be standardized."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} is constant (zero sample variance)")


class DegenerateKernelError(DomainError):
    """The projected kernel carries no usable signal (all eigenvalues zero)."""


class NumericError(RuntimeError):
    """A numeric routine failed to converge within its budget."""


class QuadratureError(NumericError):
    """Successive quadrature refinements did not agree within tolerance."""
