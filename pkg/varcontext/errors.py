"""Exception hierarchy shared by every varcontext module.

Each class also derives from the builtin exception a caller would naturally
catch (ValueError, ArithmeticError, RuntimeError), so code that does not know
about varcontext still handles them sensibly.
"""
from typing import List, Optional


class VarContextError(Exception):
    """Root of all varcontext errors."""


class DimensionError(VarContextError, ValueError):
    """Raised when tensor or parameter extents do not conform."""


class DomainError(VarContextError, ValueError):
    """Raised when an operation is mathematically undefined for its input."""


class NumericalError(VarContextError, ArithmeticError):
    """Raised when a non-finite value reaches an operation boundary."""


class ModeError(VarContextError, RuntimeError):
    """Raised when an operation is unavailable in the current mode."""


class ValidationError(VarContextError, ValueError):
    """Raised when input records violate their invariants.

    Args:
        message (str): Summary line.
        issues (List[str]): One entry per violation, each naming the record.
    """

    def __init__(self, message: str, issues: Optional[List[str]] = None):
        self.issues = list(issues or [])
        if self.issues:
            message = message + "\n" + "\n".join(f"  - {issue}" for issue in self.issues)
        super().__init__(message)


class ConfigError(VarContextError, ValueError):
    """Raised for invalid or contradictory configuration."""

    def __init__(self, message: str, lines: Optional[List[int]] = None):
        self.lines = list(lines or [])
        super().__init__(message)


class TrainingHalted(NumericalError):
    """Raised by the trainer after it saved the last good checkpoint."""

    def __init__(self, message: str, checkpoint_path: Optional[str] = None):
        self.checkpoint_path = checkpoint_path
        super().__init__(message)


# Exit codes of the command line surface.
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the stable command line exit code."""
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, VarContextError):
        return EXIT_USAGE
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_USAGE
