"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, budget or experiment parameters."""


class DomainError(ValueError):
    """Argument outside the domain of a closed-form expression."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed to converge."""


class CalibrationError(NumericalError):
    """Target-MSE calibration could not bracket or hit the slot budget."""


class StructuralError(NumericalError):
    """The posterior MSE profile does not admit a two-threshold stopping rule."""
