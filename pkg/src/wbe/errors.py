"""Exception hierarchy. The CLI maps each class onto an exit code."""

from __future__ import annotations


class WBEError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2
    stage: str | None = None  # pipeline stage that raised, set by the orchestrator


class DataError(WBEError, ValueError):
    """Input data violates a precondition (gaps, bad dates, too short...)."""

    exit_code = 2


class NumericError(WBEError, ArithmeticError):
    """A numerical procedure failed (singular design, undefined metric...)."""

    exit_code = 3


class ConfigError(WBEError, ValueError):
    """Malformed or inconsistent configuration."""

    exit_code = 1
