import logging
import sys
from typing import Callable, Any, Optional


class SessionLoadError(Exception):
    """Raised when a session manifest or one of its channel files is invalid."""

    def __init__(self, message: Optional[str] = None):
        default: str = "Failed to load the recording session."
        super().__init__(message or default)


class MissingFileError(Exception):
    """Raised when a referenced file does not exist."""

    def __init__(self, message: Optional[str] = None):
        default: str = "File not found."
        super().__init__(message or default)


class AlignmentError(Exception):
    """Raised when streams cannot be aligned on their sync markers."""

    def __init__(self, message: Optional[str] = None):
        default: str = "empty common interval"
        super().__init__(message or default)


class FileWriteError(Exception):
    """Raised when an error occurs while attempting to write to a file."""

    def __init__(self, message: Optional[str] = None):
        default: str = "An error occurred while writing to the file."
        super().__init__(message or default)


class FilterDesignError(Exception):
    """Raised when a filter specification cannot be realized."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The filter specification cannot be realized."
        super().__init__(message or default)


class SignalTooShortError(Exception):
    """Raised when a signal is too short for the requested processing."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The signal is too short for this operation."
        super().__init__(message or default)


class DecimationError(Exception):
    """Raised when the decimation factor is not an integer."""

    def __init__(self, message: Optional[str] = None):
        default: str = "Decimation requires an integer factor."
        super().__init__(message or default)


class IcaConvergenceError(Exception):
    """Raised when ICA does not converge within the iteration budget."""

    def __init__(self, message: Optional[str] = None):
        default: str = "ICA did not converge."
        super().__init__(message or default)


class RankDeficientError(Exception):
    """Raised when a channel is a linear combination of the others."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The channel matrix is rank deficient."
        super().__init__(message or default)


class ReconstructionError(Exception):
    """Raised when an ICA reconstruction request is invalid."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The reconstruction request is invalid."
        super().__init__(message or default)


class CosineSimilarityError(Exception):
    """Raised when a cosine similarity is requested for a zero-norm vector."""

    def __init__(self, message: Optional[str] = None):
        default: str = "Cosine similarity is undefined for zero-norm vectors."
        super().__init__(message or default)


class EdaSolverError(Exception):
    """Raised when the EDA decomposition solver fails."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The EDA decomposition did not converge."
        super().__init__(message or default)


class SamplingRateError(Exception):
    """Raised when a sampling rate is outside the supported range."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The sampling rate is not supported."
        super().__init__(message or default)


class FusionError(Exception):
    """Raised when the modality streams cannot be fused."""

    def __init__(self, message: Optional[str] = None):
        default: str = "Failed to fuse the modality streams."
        super().__init__(message or default)


class WindowError(Exception):
    """Raised when an analysis window falls outside the signal."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The analysis window is out of range."
        super().__init__(message or default)


class EvaluationError(Exception):
    """Raised when an evaluation metric receives degenerate input."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The evaluation input is degenerate."
        super().__init__(message or default)


class DimensionMismatchError(Exception):
    """Raised when two inputs that must share a shape do not."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The inputs have mismatched dimensions."
        super().__init__(message or default)


class ConfigError(Exception):
    """Raised when the pipeline configuration is invalid."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The pipeline configuration is invalid."
        super().__init__(message or default)


class SynthSpecError(Exception):
    """Raised when a synthetic session specification is infeasible."""

    def __init__(self, message: Optional[str] = None):
        default: str = "The synthetic session specification is infeasible."
        super().__init__(message or default)


class UsageError(Exception):
    """Raised when the command line arguments are inconsistent."""

    def __init__(self, message: Optional[str] = None):
        default: str = "Invalid command line usage."
        super().__init__(message or default)


# Bad input from the user: exit code 2
INPUT_ERRORS = (
    SessionLoadError,
    MissingFileError,
    AlignmentError,
    ConfigError,
    SynthSpecError,
    UsageError,
    DimensionMismatchError,
    SamplingRateError,
    DecimationError,
    WindowError,
)

# Numerical or processing failures: exit code 1
COMPUTE_ERRORS = (
    FileWriteError,
    FilterDesignError,
    SignalTooShortError,
    IcaConvergenceError,
    RankDeficientError,
    ReconstructionError,
    CosineSimilarityError,
    EdaSolverError,
    FusionError,
    EvaluationError,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ErrorHandler:
    """
    A logging utility class that configures a logger and provides a decorator
    mapping known errors to process exit codes.

    Args:
        log_file (str): Path to the log file. Defaults to '/tmp/CueTrace.log'.
    """

    def __init__(self, log_file: str = "/tmp/CueTrace.log"):
        self.logger: logging.Logger = logging.getLogger("CueTrace")

        if not self.logger.handlers:
            self.logger.setLevel(logging.INFO)
            handler: logging.FileHandler = logging.FileHandler(log_file)
            console: logging.StreamHandler = logging.StreamHandler(sys.stdout)

            formatter: logging.Formatter = logging.Formatter(
                "%(asctime)s [%(levelname)s] %(message)s"
            )
            handler.setFormatter(formatter)
            console.setFormatter(formatter)

            self.logger.addHandler(handler)
            self.logger.addHandler(console)

    def handle(self, func: Callable[..., int]) -> Callable[..., int]:
        """
        Decorator for command functions: logs known exceptions and turns them
        into exit codes.

        Args:
            func (Callable): The command to decorate. It returns an exit code.

        Returns:
            Callable: The wrapped command, which never raises.
        """

        def wrapper(*args: Any, **kwargs: Any) -> int:
            try:
                return func(*args, **kwargs)
            except INPUT_ERRORS as e:
                self.logger.error(f"{type(e).__name__}: {e}")
                return EXIT_USAGE
            except COMPUTE_ERRORS as e:
                self.logger.error(f"{type(e).__name__}: {e}")
                return EXIT_FAILURE
            except Exception:
                self.logger.exception("Unhandled exception occurred")
                return EXIT_FAILURE

        wrapper.__name__ = func.__name__
        wrapper.__doc__ = func.__doc__
        return wrapper

    def set_verbose(self, verbose: bool) -> None:
        """Switch the logger between DEBUG and INFO."""
        self.logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    def debug(self, message: str) -> None:
        """Log a debug message."""
        self.logger.debug(message)

    def info(self, message: str) -> None:
        """Log an informational message."""
        self.logger.info(message)

    def warning(self, message: str) -> None:
        """Log a warning message."""
        self.logger.warning(message)

    def error(self, message: str) -> None:
        """Log an error message."""
        self.logger.error(message)

    def exception(self, message: str) -> None:
        """Log an exception message with stack trace."""
        self.logger.exception(message)
