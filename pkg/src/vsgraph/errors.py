"""Exception hierarchy shared by every stage of the label-correction pipeline."""


class VSGraphError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(VSGraphError, ValueError):
    """A file does not follow the expected binary or text layout."""


class LengthError(FormatError):
    """A payload is shorter or longer than its header declares."""


class ValidationError(VSGraphError, ValueError):
    """Values are well-formed but violate a domain invariant."""


class ContiguityError(ValidationError):
    """Sample ids are not the dense range 0..N-1."""


class ShapeError(VSGraphError, ValueError):
    """Array shapes do not line up."""


class ArgumentError(VSGraphError, ValueError):
    """A scalar argument is out of its allowed range."""


class ConfigError(VSGraphError, ValueError):
    """A run or generator configuration cannot be satisfied."""


class MatrixWriteError(VSGraphError, OSError):
    """Writing an artifact failed."""

    def __init__(self, path, cause):
        super().__init__(f"cannot write {path}: {cause}")
        self.path = path


class DivergenceError(VSGraphError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f"loss became {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class InfiniteLossError(VSGraphError, ArithmeticError):
    """A target puts mass on a class the prediction gives zero probability."""


class StageError(VSGraphError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
