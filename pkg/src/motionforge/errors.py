"""Error taxonomy shared by the library and the CLI.

Each class carries a stable machine-readable code and the process exit
code the CLI maps it to.
"""

from __future__ import annotations

__all__ = [
    "MotionForgeError",
    "ConfigError",
    "InputMissingError",
    "SchemaError",
    "ContractError",
]


class MotionForgeError(Exception):
    """Base class. Unclassified failures exit as internal errors."""

    code = "internal-error"
    exit_code = 5


class ConfigError(MotionForgeError):
    """Invalid or inconsistent configuration values."""

    code = "config-error"
    exit_code = 2


class InputMissingError(MotionForgeError):
    """A configured input path does not exist."""

    code = "input-missing"
    exit_code = 3


class SchemaError(MotionForgeError):
    """An input file parsed but violates its schema or invariants.

    ``violations`` keeps the full list when several checks failed; the
    exception message carries the first one.
    """

    code = "contract-violation"
    exit_code = 4

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations) if violations else [message]


class ContractError(MotionForgeError):
    """A runtime pre- or postcondition was violated by a caller or plugin."""

    code = "contract-violation"
    exit_code = 4
