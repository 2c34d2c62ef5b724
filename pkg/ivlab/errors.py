"""
Base exception classes. Errors specific to one module are defined next to the
code that raises them, as subclasses of these.
"""


from __future__ import annotations


class IVLabError(Exception):
    """Base class for all errors raised deliberately by `ivlab`."""
    pass


class ConfigurationError(IVLabError):
    """
    A distribution, population or policy was configured with values that
    violate its documented preconditions.
    """
    pass


__all__ = ['IVLabError', 'ConfigurationError']
