"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class ShapeError(ValueError):
    """Raised when tensor shapes do not match a layer or model contract."""


class ContractError(RuntimeError):
    """Raised when an internal call-order contract is broken (e.g. backward before forward)."""


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss."""
