"""Exception hierarchy and the exit codes the command line maps them to."""

from typing import Dict, Type

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""

    exit_code: int = EXIT_RUNTIME


class ConfigError(SimulationError, ValueError):
    """A configuration key, value or invariant is invalid."""

    exit_code = EXIT_VALIDATION

    def __init__(self, message: str, key: str = "", line: int = 0) -> None:
        self.key = key
        self.line = line
        location = ""
        if key:
            location = f"{key} (line {line}): "
        super().__init__(f"{location}{message}")


class ParamFormatError(ConfigError):
    """A trained-parameter file cannot be parsed."""


class NumericalError(SimulationError):
    """A computation produced NaN or Inf."""

    exit_code = EXIT_RUNTIME


class AcceptanceError(SimulationError):
    """A property check (IR, IC, gradient, roundtrip) failed."""

    exit_code = EXIT_ACCEPTANCE


EXIT_CODES: Dict[Type[SimulationError], int] = {
    ConfigError: EXIT_VALIDATION,
    ParamFormatError: EXIT_VALIDATION,
    NumericalError: EXIT_RUNTIME,
    AcceptanceError: EXIT_ACCEPTANCE,
}


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the process exit code.

    Args:
        error: The exception that ended the run.

    Returns:
        The exit code; unknown exceptions count as runtime failures.
    """
    if isinstance(error, SimulationError):
        return error.exit_code
    return EXIT_RUNTIME
