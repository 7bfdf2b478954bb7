"""Exception types shared across the package."""


class BindkitError(Exception):
    """Base class for all package errors."""


class ShapeError(BindkitError, ValueError):
    """Operands have incompatible shapes or sizes."""


class DegenerateVectorError(BindkitError, ValueError):
    """Vector norm too small to normalize safely."""


class LayoutError(BindkitError, ValueError):
    """Flat parameter layouts are inconsistent or do not match."""


class DomainError(BindkitError, ValueError):
    """Scalar argument outside its permitted range."""


class ModalityError(BindkitError, TypeError):
    """Record does not match the encoder's modality."""


class ConfigError(BindkitError, ValueError):
    """Invalid or unknown configuration value."""


class DataError(BindkitError, ValueError):
    """Dataset contents violate a required pairing or labeling contract."""


class DataFormatError(BindkitError, ValueError):
    """Malformed binary file (bad magic, version, or truncation)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(BindkitError, RuntimeError):
    """Training loss became non-finite.

    ``last_params`` holds the most recent finite-loss parameter snapshot,
    keyed by parameter-group name.
    """

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class PlanError(BindkitError, ValueError):
    """A patch plan references a modality without a paired dataset."""


class VerificationError(BindkitError, RuntimeError):
    """A runtime self-check failed (gradient check, accuracy monotonicity)."""
