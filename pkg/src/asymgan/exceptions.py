"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shape or dimensionality mismatch."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class SpecError(ValueError):
    """Inconsistent generator or discriminator specification."""


class IngestionError(RuntimeError):
    """Dataset directory missing, unreadable, or unwritable."""


class TrainingError(RuntimeError):
    """Non-finite loss or other unrecoverable failure inside the training loop."""

    def __init__(self, component, message=None):
        self.component = component
        super().__init__(message or f"non-finite value in component '{component}'")


class NumericError(RuntimeError):
    """Numerical routine failed to produce a valid result."""
