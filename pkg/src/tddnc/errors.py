"""Exception types shared across the package."""


class InfeasiblePlanError(ValueError):
    """A code plan violates the count or deadline constraints."""


class NoFeasiblePlanError(RuntimeError):
    """A search found no feasible plan that meets its constraint."""


class NumericalError(ArithmeticError):
    """A computed probability or throughput is not a finite, in-range number."""
