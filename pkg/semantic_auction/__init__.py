"""Energy auctions for wireless powered semantic-communication devices."""

from .errors import AcceptanceError, ConfigError, NumericalError, ParamFormatError, SimulationError

__version__ = "0.1.0"

__all__ = [
    "AcceptanceError",
    "ConfigError",
    "NumericalError",
    "ParamFormatError",
    "SimulationError",
    "__version__",
]
