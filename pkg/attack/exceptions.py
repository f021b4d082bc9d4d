class AttackError(Exception):
    """Base exception for attack errors."""
    pass


class AttackInputError(AttackError):
    """Exception raised for mismatched shapes or observations outside the pixel range."""
    pass


class AttackDivergenceError(AttackError):
    """Exception raised when the attack objective or its gradient stops being finite."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class BudgetSplitError(AttackError):
    """Exception raised when the adversarial share exceeds the total noise level."""
    pass
