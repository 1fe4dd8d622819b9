"""Exception types shared across the toolkit.

Each class carries the process exit code the command-line front end maps it to.
"""

from __future__ import annotations

import numpy as np


class IVSpectralError(Exception):
    exit_code = 1

    def __init__(self, message: str, field: str | None = None):
        self.message = message
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)

    def with_prefix(self, prefix: str) -> "IVSpectralError":
        """Return a copy whose field path is qualified by ``prefix``."""
        field = f"{prefix}.{self.field}" if self.field else prefix
        return type(self)(self.message, field=field)

    def to_record(self) -> dict:
        return {
            "type": type(self).__name__,
            "exit_code": self.exit_code,
            "field": self.field,
            "message": self.message,
        }


class ConfigurationError(IVSpectralError, ValueError):
    exit_code = 2


class ParameterError(IVSpectralError, ValueError):
    exit_code = 2


class DataError(IVSpectralError, ValueError):
    exit_code = 3


class RankError(IVSpectralError, np.linalg.LinAlgError):
    exit_code = 4
