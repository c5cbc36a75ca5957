import logging
import pytest
from src.error_handler import (
    AlignmentError,
    ConfigError,
    EdaSolverError,
    ErrorHandler,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    FileWriteError,
    FusionError,
    MissingFileError,
    SessionLoadError,
    SynthSpecError,
    UsageError,
    WindowError,
)

logger = logging.getLogger(__name__)


def test_custom_error_messages():
    assert str(SessionLoadError("session.json line 3: bad fs")) == "session.json line 3: bad fs"
    assert str(MissingFileError("gone")) == "gone"
    assert str(FusionError("Lengths differ")) == "Lengths differ"
    assert str(WindowError("Out of range")) == "Out of range"


def test_default_error_messages():
    assert str(SessionLoadError()) == "Failed to load the recording session."
    assert str(MissingFileError()) == "File not found."
    assert str(AlignmentError()) == "empty common interval"
    assert str(FileWriteError()) == "An error occurred while writing to the file."
    assert str(EdaSolverError()) == "The EDA decomposition did not converge."
    assert str(ConfigError()) == "The pipeline configuration is invalid."
    assert str(UsageError()) == "Invalid command line usage."


@pytest.mark.parametrize(
    "exc, code",
    [
        (SessionLoadError, EXIT_USAGE),
        (ConfigError, EXIT_USAGE),
        (SynthSpecError, EXIT_USAGE),
        (EdaSolverError, EXIT_FAILURE),
        (FusionError, EXIT_FAILURE),
        (RuntimeError, EXIT_FAILURE),
    ],
)
def test_handle_maps_exceptions_to_exit_codes(exc, code, caplog):
    handler = ErrorHandler()
    caplog.set_level(logging.ERROR)

    @handler.handle
    def command() -> int:
        raise exc("boom")

    assert command() == code
    assert "boom" in caplog.text


def test_handle_passes_through_exit_code():
    handler = ErrorHandler()

    @handler.handle
    def command() -> int:
        """Docstring survives."""
        return EXIT_OK

    assert command() == EXIT_OK
    assert command.__name__ == "command"
    assert command.__doc__ == "Docstring survives."


def test_error_handler_logging_levels(caplog):
    handler = ErrorHandler()
    caplog.set_level(logging.DEBUG)

    handler.info("This is an info log.")
    handler.warning("This is a warning log.")
    handler.error("This is an error log.")
    assert "This is an info log." in caplog.text
    assert "This is a warning log." in caplog.text
    assert "This is an error log." in caplog.text


def test_set_verbose_switches_level():
    handler = ErrorHandler()
    handler.set_verbose(True)
    assert handler.logger.level == logging.DEBUG
    handler.set_verbose(False)
    assert handler.logger.level == logging.INFO
