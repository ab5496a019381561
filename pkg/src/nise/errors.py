"""Exception hierarchy.

Each family carries the CLI exit status it maps to.
"""

from __future__ import annotations


class NiseError(Exception):
    exit_code = 1


class ConfigError(NiseError):
    """Invalid model specification, CLI flags or configuration file."""

    exit_code = 2


class DataError(NiseError):
    exit_code = 3


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class IntegrityError(DataError):
    pass


class DomainError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class NumericalError(NiseError):
    exit_code = 4


class ConditioningError(NumericalError):
    pass


class NormalizationError(NumericalError):
    pass


class UnstableSystemError(ConfigError):
    """Simultaneous system without a reduced form."""


class SpecError(ConfigError, IntegrityError):
    """A model specification that contradicts itself (exits as a config error)."""
