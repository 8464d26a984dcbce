"""Exception types raised across the pipeline."""


class MckccaError(Exception):
    """Base class for all package errors."""


class EmptyImage(MckccaError, ValueError):
    pass


class ComponentTooSmall(MckccaError, ValueError):
    pass


class DimensionMismatch(MckccaError, ValueError):
    pass


class NegativeInput(MckccaError, ValueError):
    pass


class DegenerateSet(MckccaError, ValueError):
    pass


class SingularSystem(MckccaError, ArithmeticError):
    pass


class NonFinite(MckccaError, ArithmeticError):
    pass


class TooFewIdentities(MckccaError, ValueError):
    pass


class AllChannelsDropped(MckccaError, RuntimeError):
    pass


class InsufficientIdentities(MckccaError, ValueError):
    pass


class MissingTruth(MckccaError, ValueError):
    pass


class ShapeMismatch(MckccaError, ValueError):
    pass


class LayoutError(MckccaError, ValueError):
    pass


class DecodeError(MckccaError, IOError):
    pass


class ConfigError(MckccaError, ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


class HashMismatch(MckccaError, ValueError):
    """An on-disk artifact was produced under a different configuration."""
