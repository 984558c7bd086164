"""Exception hierarchy shared across the package."""


class UmstNetError(Exception):
    """Base class for all package errors."""


class InvalidInputError(UmstNetError, ValueError):
    pass


class DisconnectedGraphError(UmstNetError):
    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class UnreachableError(UmstNetError):
    pass


class InvalidConfigError(UmstNetError, ValueError):
    pass


class ConstructionError(UmstNetError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class GenerationError(UmstNetError):
    pass


class SetupError(UmstNetError):
    pass


class ValidationRequiredError(UmstNetError):
    pass


class ComparisonError(UmstNetError):
    pass


class FormatError(UmstNetError, ValueError):
    """A file failed to parse or violated a format invariant."""
