"""Domain-of-attraction estimates for saturated switched linear systems under dwell-time switching."""
__version__ = "0.1.0"

from .errors import DomainError, InvalidArgumentError, NumericalFailure, UnsupportedDimensionError
from .model import Mode, Schedule, SwitchedSystem, Trajectory, two_mode_example, simulate

__all__ = [
    "DomainError",
    "InvalidArgumentError",
    "Mode",
    "NumericalFailure",
    "Schedule",
    "SwitchedSystem",
    "Trajectory",
    "UnsupportedDimensionError",
    "two_mode_example",
    "simulate",
    "__version__",
]
