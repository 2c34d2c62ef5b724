"""
A small demo of the combined policy.
"""


from __future__ import annotations
from dataclasses import replace

from .harness.experiments import RACING_POLICY, quiet_two_type_population
from .logging import PrintLogger
from .mechanism.binary import run_combined_policy
from .stats import Streams


DEMO_POLICY = replace(RACING_POLICY, horizon=8000)


def run() -> None:
    """
    Runs the demo: skeptics and believers in equal shares on a low-noise
    baseline, a true effect of 0.01, and every event printed as it happens.
    Both types are certified from the data.
    """
    (log, report) = run_combined_policy(DEMO_POLICY, quiet_two_type_population(), 0.01, Streams(0),
                                        logger=PrintLogger())
    print()
    print(f"winner = {log.winner}, stop round = {log.stop_round}, regret = {report.total:.6g}")


__all__ = ['DEMO_POLICY', 'run']

import unittest
from contextlib import redirect_stdout
from io import StringIO


class TestDemo(unittest.TestCase):
    def test_runs(self) -> None:
        out = StringIO()
        with redirect_stdout(out):
            run()
        self.assertIn("winner = ", out.getvalue())
        self.assertIn("complies (rho)", out.getvalue())
        self.assertIn("complies (phase)", out.getvalue())
