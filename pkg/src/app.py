"""
Main Application Entry Point.

This module initializes and runs the CueTrace command line.
"""

import sys

# Local Imports
from src import __version__, __author__
from src.cli import run_cli


def main() -> int:
    """
    Entry point for application logic. Returns the process exit code.
    """
    print(f"CueTrace v{__version__} by {__author__}\n")
    return run_cli()


if __name__ == "__main__":
    """
    Initializes and runs the app.
    """
    sys.exit(main())
