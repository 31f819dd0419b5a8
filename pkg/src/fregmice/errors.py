"""Exception types shared across the package.

Every error carries a short machine-readable ``category`` so the CLI can emit
``error:<category>:<detail>`` lines without string-matching messages.
"""
from __future__ import annotations


class FregmiceError(Exception):
    """Base class for all package errors."""

    category = "internal"


class InvalidGridError(FregmiceError):
    category = "data"


class DimensionError(FregmiceError):
    category = "data"


class DomainError(FregmiceError):
    category = "data"


class DataError(FregmiceError):
    category = "data"


class InsufficientDataError(DataError):
    pass


class IncompleteDataError(DataError):
    pass


class UnimputableColumnError(DataError):
    pass


class RankError(FregmiceError):
    category = "fit"


class FitError(FregmiceError):
    category = "fit"


class IncompatibilityError(FregmiceError):
    category = "data"


class ConfigError(FregmiceError):
    category = "config"


class SeparationWarning(UserWarning):
    """Logistic fit looks separated (|linear predictor| > 30 somewhere)."""
