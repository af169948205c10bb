"""Exception types shared across the package."""

from __future__ import annotations


class ContractViolation(ValueError):
    """An argument or state broke a documented precondition."""


class FormatError(ValueError):
    """A file or byte stream does not match its declared layout."""
