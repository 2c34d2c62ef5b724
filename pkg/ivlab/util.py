"""
Utilities.
"""


from __future__ import annotations
from typing import Generator, TypeAlias

from simpy import Event

from .errors import ConfigurationError


ProcessEffect: TypeAlias = Generator[Event, None, None]

def skip() -> ProcessEffect:
    """
    (process) Does nothing.
    """
    # Make this a generator.
    yield from []


def check_probability(name: str, value: float, open_low: bool=True, open_high: bool=True) -> None:
    """
    Raises `ConfigurationError` unless `value` lies in the unit interval, with
    each end open or closed as requested.
    """
    low_ok = value > 0 if open_low else value >= 0
    high_ok = value < 1 if open_high else value <= 1
    if not (low_ok and high_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ConfigurationError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")


__all__ = ['ProcessEffect', 'skip', 'check_probability']

import unittest


class TestUtil(unittest.TestCase):
    def test_check_probability(self) -> None:
        check_probability("delta", 0.05)
        check_probability("p", 0.0, open_low=False)
        check_probability("p", 1.0, open_high=False)
        self.assertRaises(ConfigurationError, check_probability, "delta", 0.0)
        self.assertRaises(ConfigurationError, check_probability, "delta", 1.0)
        self.assertRaises(ConfigurationError, check_probability, "p", -0.1, open_low=False)
