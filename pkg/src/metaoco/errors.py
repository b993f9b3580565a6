"""Exception types shared across the package.

Each class marks a distinct failure mode so callers can react to the
specific contract that was broken instead of parsing messages.
"""


class ContractViolation(ValueError):
    """An argument broke a documented precondition (shape, range, finiteness)."""


class UnsupportedOperation(TypeError):
    """The requested operation is undefined for this loss kind."""


class InfeasibleSet(ValueError):
    """The constraint set is empty (e.g. simplex floor with M * floor > 1)."""


class DegeneratePrior(ValueError):
    """All prior mass sits on experts whose aggregated weight underflows to zero."""


class DivergenceError(RuntimeError):
    """An iterative solver produced non-finite iterates."""


class ConstraintActive(Exception):
    """Closed-form minimizer fell outside the decision ball; caller must
    fall back to the constrained solver."""

    def __init__(self, norm: float, radius: float):
        super().__init__(
            f"unconstrained minimizer has norm {norm:.6g} > radius {radius:.6g}"
        )
        self.norm = norm
        self.radius = radius
