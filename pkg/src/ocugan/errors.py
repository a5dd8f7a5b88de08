"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad arguments or configuration; maps to CLI exit code 1."""


class NumericalError(ArithmeticError):
    """A numerical routine left its guaranteed regime (e.g. an eigenvalue
    far below zero in a matrix square root)."""


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite during training.

    Carries the offending term and the step at which it appeared so the
    failure can be diagnosed without digging through logs.
    """

    def __init__(self, term: str, step: int, message: str | None = None):
        self.term = term
        self.step = step
        super().__init__(message or f"non-finite loss term '{term}' at step {step}")


class NanLossError(ValueError):
    """Raised by loss aggregation when a term is NaN/Inf; the trainer
    converts this into :class:`TrainingDiverged` with step context."""

    def __init__(self, term: str):
        self.term = term
        super().__init__(f"loss term '{term}' is not finite")
