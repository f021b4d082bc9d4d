class EvaluationError(Exception):
    """Base exception for evaluation errors."""
    pass


class InvalidProtocolError(EvaluationError):
    """Exception raised for malformed noise levels or report columns."""
    pass


class EnergyBudgetViolation(EvaluationError):
    """Exception raised when an attacked sample's total noise exceeds eps_hat * sqrt(m)."""

    def __init__(self, message, norm, bound):
        super().__init__(message)
        self.norm = norm
        self.bound = bound
