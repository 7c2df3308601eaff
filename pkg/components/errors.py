"""
Exception hierarchy for the toolkit.
Each category carries the CLI exit code it maps to.
"""
from typing import Optional, Sequence

from config import config


class NetformError(Exception):
    """Base class for all toolkit failures."""
    category = 'numeric'

    @property
    def exit_code(self) -> int:
        return config.EXIT_CODES.get(self.category, 1)


class ConfigurationError(NetformError, ValueError):
    """Inconsistent parameters, covariates or run configuration."""
    category = 'config'


class PanelParseError(NetformError, ValueError):
    """Malformed panel input; carries the 1-based file line when known."""
    category = 'parse'

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ''
        if path:
            location = f'{path}'
            if line is not None:
                location += f':{line}'
            location += ': '
        super().__init__(f'{location}{message}')


class CapacityError(NetformError):
    """A size or node budget was exceeded."""
    category = 'capacity'


class NumericalError(NetformError):
    """An iterative numerical routine failed to converge."""
    category = 'numeric'


class IdentificationBoundError(NumericalError):
    """A positive-entry count matches no admissible number of rounds."""


class RecoveryError(NumericalError):
    """Primitive recovery from a transition matrix left a residual above tolerance."""


class RankDeficiencyError(NumericalError):
    """Regression design is rank deficient."""

    def __init__(self, message: str, columns: Sequence[str] = ()):
        self.columns = list(columns)
        if self.columns:
            message = f"{message}: collinear columns {', '.join(self.columns)}"
        super().__init__(message)


class ToleranceError(NetformError):
    """No simulated draw fell within the ABC tolerance."""
    category = 'tolerance'


class EstimationError(NetformError):
    """An estimation run could not produce any usable output."""
    category = 'tolerance'
