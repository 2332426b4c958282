"""Exception types shared across the package."""


class PoseactError(Exception):
    """Base class for every error this package raises on purpose."""


class LayoutError(PoseactError, ValueError):
    """A matrix, vector, or name list does not match the declared block layout."""


class ValidationError(PoseactError, ValueError):
    """Input content is unusable: non-finite values, bad labels, missing labels."""


class ConfigError(PoseactError, ValueError):
    """A hyperparameter, flag, or generator setting is out of range."""


class SingularityError(PoseactError, ArithmeticError):
    """A linear system that must be positive definite turned out not to be."""


class DataFormatError(PoseactError, ValueError):
    """A dataset or model file failed to parse or failed schema validation."""
