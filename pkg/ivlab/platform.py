"""
The round loop: one agent arrives per unit of simulated time.
"""


from __future__ import annotations
from typing import Optional, Sequence, Union

from simpy import Environment
from simpy.events import Process, Timeout

from .agents import (BehaviorModel, PolicyPosterior, PopulationSpec, StageView, TheoryDriven, agent_action,
                     draw_agent, reward)
from .compliance import Certificates
from .logging import NO_STAGE, PLANNER, LogEvent, Logger
from .mechanism import Flip, RoundRecord, Stage, TrajectoryLog
from .stats import Streams
from .util import ProcessEffect, skip


class Planner:
    """
    A base class for recommendation policies. This class is intended to be
    subclassed.
    """

    def initialize(self, platform: Platform) -> None:
        """
        Initializes a `Planner` with the `Platform` it recommends on. The
        implementation in this class sets the `platform` and `env` fields.
        """
        self.platform = platform
        self.env = platform.env

    def __str__(self) -> str:
        return f"{self.__class__.__name__}"

    def log(self, event: str, detail: str) -> None:
        """Logs an event described by `event` and `detail` for the planner."""
        self.platform.log(PLANNER, event, detail)

    def recommend(self, recommendation: Optional[int], stage: Stage, phase: int=0,
                  explore: bool=False) -> ProcessEffect:
        """
        (process) Serves the next agent with `recommendation`. The
        implementation in this class calls `self.platform.serve`.
        """
        return self.platform.serve(recommendation, stage, phase, explore)

    def run(self) -> ProcessEffect:
        """
        (process) Runs the policy. The implementation in this class serves
        nobody; subclasses override it.
        """
        return skip()


class Platform:
    """
    Simulate the arriving agents. Holds the population, the true effect, the
    run-level baseline means, the behavior model and the trajectory.
    """

    def __init__(self, env: Environment, population: PopulationSpec, theta: Union[float, Sequence[float]],
                 streams: Streams, behavior: BehaviorModel=TheoryDriven(), logger: Logger=Logger()):
        """
        Constructs a `Platform`. The run-level baseline means are drawn here,
        from the `baselines` stream of `streams`.
        """
        self.env = env
        self.population = population
        self.theta = theta
        self.streams = streams
        self.behavior = behavior
        self.realized_means = population.realize_baselines(streams.stream('baselines'))
        self.planner_rng = streams.stream('planner')
        self.monte_carlo_rng = streams.stream('monte_carlo')
        self._agents_rng = streams.stream('agents')
        self._behavior_rng = streams.stream('behavior')
        self.trajectory = TrajectoryLog(population.arm_count)
        self.view = StageView(Certificates.none(len(population.types)))
        self.stage: Optional[Stage] = None
        """The stage last entered by the planner."""
        self._logger = logger
        logger.header()

    def log(self, ident: int, event: str, detail: str) -> None:
        """
        Logs an event described by `event` and `detail` for the agent type
        `ident` (or `PLANNER`), in the current round and stage.
        """
        stage = NO_STAGE if self.stage is None else self.stage.value
        self._logger.log(LogEvent(self.now, stage, ident, event, detail))

    @property
    def now(self) -> int:
        return int(self.env.now)

    def enter(self, stage: Stage) -> None:
        """Marks the start of `stage` at the current round."""
        self.trajectory.mark(self.now, stage)
        self.stage = stage
        self.log(PLANNER, "stage", stage.value)

    def publish(self, certificates: Certificates, posterior: Optional[PolicyPosterior]=None, phase: int=0) -> None:
        """
        Publishes the compliance certificates and policy model that agents
        arriving from now on see. Logs each type whose certificate turns on.
        """
        for (u, ok) in enumerate(certificates.complies):
            if ok and not self.view.certificates.holds(u):
                reason = certificates.reasons[u]
                self.trajectory.flips.append(Flip(self.now, u, reason, phase))
                self.log(u, "flip", f"complies ({reason})")
        self.view = StageView(certificates, posterior)

    def serve(self, recommendation: Optional[int], stage: Stage, phase: int=0, explore: bool=False) -> ProcessEffect:
        """
        (process) Serves one arriving agent: draws it, lets it choose an
        action given `recommendation`, records the round, and takes one unit
        of time.
        """
        t = self.now
        agent = draw_agent(self.population, t, self._agents_rng, self.realized_means)
        x = agent_action(agent, recommendation, self.view, self.behavior, self.population, self._behavior_rng)
        y = reward(self.theta, x, agent)
        self.trajectory.append(RoundRecord(t, stage, phase, agent.type_index, recommendation, x, y, explore))
        yield Timeout(self.env, 1)

    def run(self, planner: Planner) -> TrajectoryLog:
        """
        Convenience method to initialize `planner`, start its process and run
        the simulation to completion. Returns the trajectory.
        """
        planner.initialize(self)
        self.log(PLANNER, "start", str(planner))
        Process(self.env, planner.run())
        self.env.run()
        return self.trajectory


__all__ = ['Planner', 'Platform']

import unittest

from .compliance import PriorSpec
from .agents import TypeSpec
from .logging import RecordingLogger
from .stats import GaussianBaseline, TruncatedGaussian


class AlternatingTestPlanner(Planner):
    def run(self) -> ProcessEffect:
        self.platform.enter(Stage.TRIAL)
        self.platform.publish(Certificates.forced(2, [0]))
        for t in range(6):
            yield from self.recommend(t % 2, Stage.TRIAL)


def _platform(seed: int=0, logger: Logger=Logger()) -> Platform:
    pop = PopulationSpec((
        TypeSpec(PriorSpec(TruncatedGaussian(-0.5, 1.0), GaussianBaseline(0.0, 0.0, 0.0)), 0.5),
        TypeSpec(PriorSpec(TruncatedGaussian(0.9, 1.0), GaussianBaseline(0.0, 0.0, 0.0)), 0.5),
    ))
    return Platform(Environment(), pop, 0.5, Streams(seed), logger=logger)


class TestPlatform(unittest.TestCase):
    def test_rounds(self) -> None:
        platform = _platform()
        log = platform.run(AlternatingTestPlanner())
        self.assertEqual(platform.now, 6)
        self.assertEqual([r.t for r in log.records], list(range(6)))
        self.assertEqual(log.boundaries, [(0, Stage.TRIAL)])
        for r in log.records:
            # Certified never-takers follow; always-takers take the treatment.
            self.assertEqual(r.x, r.z if r.type_index == 0 else 1)
            self.assertEqual(r.y, 0.5 * r.x)

    def test_flip_logging(self) -> None:
        logger = RecordingLogger()
        platform = _platform(logger=logger)
        platform.run(AlternatingTestPlanner())
        self.assertEqual(platform.trajectory.flips, [Flip(0, 0, "forced", 0)])
        self.assertEqual(logger.named("flip"), [LogEvent(0, "trial", 0, "flip", "complies (forced)")])
        self.assertEqual(logger.named("start")[0].stage, NO_STAGE)
        # Republishing the same certificates does not flip again.
        platform.publish(Certificates.forced(2, [0]))
        self.assertEqual(len(platform.trajectory.flips), 1)

    def test_reproducible(self) -> None:
        a = _platform(3).run(AlternatingTestPlanner())
        b = _platform(3).run(AlternatingTestPlanner())
        self.assertEqual(a.records, b.records)

    def test_idle_planner(self) -> None:
        platform = _platform()
        log = platform.run(Planner())
        self.assertEqual(platform.now, 0)
        self.assertEqual(len(log), 0)
