class ProjectionError(Exception):
    """Base exception for projection errors."""
    pass


class InvalidBudgetError(ProjectionError):
    """Exception raised for a negative or non-finite budget."""
    pass


class EmptyPerturbationError(ProjectionError):
    """Exception raised when projecting a perturbation with no elements."""
    pass


class DykstraConvergenceError(ProjectionError):
    """Exception raised when Dykstra's iteration does not settle within its budget."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
