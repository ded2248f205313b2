"""Exception hierarchy shared by the library and the command-line interface."""

from __future__ import annotations


class PKTError(Exception):
    """Base class for all personapkt errors."""


class UsageError(PKTError):
    """Invalid invocation: bad flags, bad config keys, inconsistent options."""


class DataError(PKTError, ValueError):
    """Malformed or inconsistent input data (corpus, manifests, checkpoints, stores)."""


class ShapeError(PKTError, ValueError):
    """Operands with incompatible shapes."""


class ContextOverflowError(DataError):
    """Input does not fit into the model context after reserving prefix positions."""


class NotFoundError(DataError, KeyError):
    """A requested persona, prefix or file does not exist."""

    def __str__(self) -> str:
        """Render without the quoting KeyError adds."""
        return str(self.args[0]) if self.args else ""


class NumericError(PKTError, ArithmeticError):
    """Non-finite value encountered during computation or training."""

    def __init__(self, message: str, step: int | None = None) -> None:
        """Initialize with an optional training step index."""
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
