class DimensionError(ValueError):
    pass


class DegenerateProblemError(ValueError):
    """Raised when the truncated design carries no information (zero Gram)."""


class NumericalError(ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateLinkError(ValueError):
    """The link gives a scaling constant indistinguishable from zero."""


class ConfigError(ValueError):
    pass
