"""
Event logs for simulated runs. Every event carries the round it happened in,
the policy stage the planner was in, and either an agent type or `PLANNER`.
"""


from __future__ import annotations
from typing import NamedTuple, Optional, TextIO

import sys


PLANNER = -1
"""The `ident` used for events logged by the planner rather than an agent."""

NO_STAGE = "-"
"""The stage shown for events logged before the planner enters any stage."""


class LogEvent(NamedTuple):
    round: int
    stage: str
    ident: int
    event: str
    detail: str


class Logger:
    """
    A logger that does nothing. This class can be used directly or as a base
    for other logger classes.
    """

    def header(self) -> None:
        pass

    def log(self, event: LogEvent) -> None:
        pass


class PrintLogger(Logger):
    """Prints events as a table, one row per event."""

    def __init__(self, out: Optional[TextIO]=None, events: Optional[frozenset[str]]=None):
        """
        Constructs a `PrintLogger` that prints to `out` (by default
        `sys.stdout`). If `events` is given, only those event names are shown.
        """
        self.out = sys.stdout if out is None else out
        self.events = events

    def header(self) -> None:
        print(file=self.out)
        print("   Round | Stage    | Type | Event      | Detail", file=self.out)

    def log(self, event: LogEvent) -> None:
        if self.events is not None and event.event not in self.events:
            return
        who = "   -" if event.ident == PLANNER else f"{event.ident:4d}"
        print(f"{event.round:8d} | {event.stage:8} | {who} | {event.event:10} | {event.detail}", file=self.out)


class RecordingLogger(Logger):
    """Keeps every event in memory."""

    def __init__(self) -> None:
        self.events: list[LogEvent] = []

    def log(self, event: LogEvent) -> None:
        self.events.append(event)

    def named(self, name: str) -> list[LogEvent]:
        return [e for e in self.events if e.event == name]


__all__ = ['PLANNER', 'NO_STAGE', 'LogEvent', 'Logger', 'PrintLogger', 'RecordingLogger']

import unittest
from io import StringIO


class TestLogging(unittest.TestCase):
    def test_print_logger(self) -> None:
        out = StringIO()
        logger = PrintLogger(out)
        logger.header()
        logger.log(LogEvent(12, "racing", PLANNER, "stop", "winner 1"))
        logger.log(LogEvent(13, "exploit", 0, "flip", "complies (phase)"))
        lines = out.getvalue().splitlines()
        self.assertEqual(lines[0], "")
        self.assertEqual(lines[1], "   Round | Stage    | Type | Event      | Detail")
        self.assertEqual(lines[2], "      12 | racing   |    - | stop       | winner 1")
        self.assertEqual(lines[3], "      13 | exploit  |    0 | flip       | complies (phase)")

    def test_event_filter(self) -> None:
        out = StringIO()
        logger = PrintLogger(out, frozenset({"flip"}))
        logger.log(LogEvent(1, NO_STAGE, PLANNER, "start", "planner"))
        logger.log(LogEvent(2, "sampling", 1, "flip", "complies (rho)"))
        self.assertEqual(out.getvalue().splitlines(), ["       2 | sampling |    1 | flip       | complies (rho)"])

    def test_recording_logger(self) -> None:
        logger = RecordingLogger()
        logger.header()
        logger.log(LogEvent(0, "first", PLANNER, "stage", "first"))
        logger.log(LogEvent(5, "sampling", 0, "flip", "complies (rho)"))
        self.assertEqual(len(logger.events), 2)
        self.assertEqual(logger.named("flip"), [LogEvent(5, "sampling", 0, "flip", "complies (rho)")])

    def test_silent_logger(self) -> None:
        logger = Logger()
        logger.header()
        logger.log(LogEvent(0, NO_STAGE, 0, "event", "detail"))
