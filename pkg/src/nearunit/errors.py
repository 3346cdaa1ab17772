"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A configuration or argument violates a documented invariant."""


class RegimeError(ValidationError):
    """An initialization or normalization is used outside the regime it belongs to."""


class NumericalError(ArithmeticError):
    """A computation could not produce a meaningful number."""


class DegenerateError(NumericalError):
    """Input data make the requested quantity undefined (e.g. all regressors zero)."""


class ExplosionError(NumericalError):
    """A simulated path left the representable range."""
