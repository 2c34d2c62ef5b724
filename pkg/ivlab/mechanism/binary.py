"""
Recommendation policies for a binary treatment.

`SamplingStage` first lets agents act on their priors until enough control
and treatment rewards have been seen, decides from them whether treatment
looks clearly better (event ξ), and then recommends that verdict except in
exactly ρℓ uniformly chosen explore rounds, which recommend treatment. Agents
that cannot tell an explore round from an exploit round follow the
recommendation as long as ρ is small enough.

`RacingStage` then alternates h control and h treatment recommendations per
phase, tracking the IV estimate of the best sample set seen so far, until
the sign of the effect is known; from then on it recommends the winner.

`CombinedPolicy` runs the two in sequence, feeding the sampling-stage
samples into the race.
"""


from __future__ import annotations
from typing import Optional, Sequence, Union
from math import ceil, isfinite

import numpy as np
from numpy.random import Generator
from simpy import Environment

from ..agents import BehaviorModel, PolicyPosterior, PopulationSpec, TheoryDriven
from ..compliance import (Certificates, PriorSpec, XiConfig, certify_sampling, expected_baseline,
                          racing_thresholds, simulate_xi, xi_delta_admissible, xi_event_holds,
                          xi_event_holds_mirrored)
from ..errors import ConfigurationError
from ..estimator import EstimateWithBound, SampleSet, estimate_binary
from ..logging import Logger
from ..platform import Planner, Platform
from ..stats import Streams
from ..util import ProcessEffect
from . import (InsufficientFirstStageError, LengthMode, PolicyConfig, RegretReport, Stage, TrajectoryLog,
               pseudo_regret, race_estimate, racing_certificates)


class SamplingPosterior(PolicyPosterior):
    """
    The sampling stage as agents model it: an explore recommendation with
    probability ρ, otherwise the first-stage verdict, which is simulated in
    each world.
    """

    def __init__(self, pop: PopulationSpec, rho: float, xi_cfg: XiConfig, mirrored: bool=False):
        super().__init__()
        self.pop = pop
        self.rho = rho
        self.xi_cfg = xi_cfg
        self.mirrored = mirrored

    def recommendation_likelihood(self, prior: PriorSpec, theta: np.ndarray, recommendation: int,
                                  rng: Generator) -> np.ndarray:
        xi = simulate_xi(self.pop, self.xi_cfg, theta, rng, self.mirrored).astype(np.float64)
        explore_arm = 0 if self.mirrored else 1
        p_explore_arm = self.rho + (1 - self.rho) * xi
        return p_explore_arm if recommendation == explore_arm else 1 - p_explore_arm


class RacingPosterior(PolicyPosterior):
    """
    The racing stage as agents model it: the estimate lies within the
    current bound A of θ, the race is over once |θ̂| > A, and until then
    either recommendation is equally likely.
    """

    def __init__(self, bound: float):
        super().__init__()
        self.bound = bound

    def recommendation_likelihood(self, prior: PriorSpec, theta: np.ndarray, recommendation: int,
                                  rng: Generator) -> np.ndarray:
        if not isfinite(self.bound):
            return np.full(len(theta), 0.5)
        estimate = theta + rng.uniform(-self.bound, self.bound, len(theta))
        over = np.abs(estimate) > self.bound
        p_treatment = np.where(over, (estimate > 0).astype(np.float64), 0.5)
        return p_treatment if recommendation == 1 else 1 - p_treatment


def _require_binary(pop: PopulationSpec, cfg: Optional[PolicyConfig]=None) -> None:
    if pop.arm_count != 1 or (cfg is not None and cfg.arm_count != 1):
        raise ConfigurationError("binary policies need a binary population and configuration")


class SamplingStage(Planner):
    """Explores at probability ρ after a recommendation-free first stage."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.samples: Optional[SampleSet] = None
        """The sampling-stage observations, once the stage has run."""
        self.a_star: Optional[int] = None

    def first_stage_length(self) -> int:
        """Returns 2·max(ℓ0/p0, ℓ1/p1), rounded up (2ℓ1/p1 when mirrored)."""
        pop = self.platform.population
        if pop.p1 == 0:
            raise ConfigurationError("the sampling stage needs always-takers in the population")
        needs = [self.cfg.ell1 / pop.p1]
        if not self.cfg.mirrored:
            if pop.p0 == 0:
                raise InsufficientFirstStageError("no never-takers: the control samples ξ needs cannot arrive")
            needs.append(self.cfg.ell0 / pop.p0)
        return ceil(2 * max(needs))

    def first_stage(self) -> ProcessEffect:
        """(process) Serves agents without recommendations, then decides a*."""
        platform = self.platform
        pop = platform.population
        cfg = self.cfg
        platform.enter(Stage.FIRST)
        platform.publish(cfg.forced_certificates(pop))
        start = len(platform.trajectory)
        for _ in range(self.first_stage_length()):
            yield from self.recommend(None, Stage.FIRST)

        records = platform.trajectory.records[start:]
        control = [r.y for r in records if r.x == 0]
        treated = [r.y for r in records if r.x == 1]
        if len(treated) < cfg.ell1 or (not cfg.mirrored and len(control) < cfg.ell0):
            raise InsufficientFirstStageError(
                f"first stage collected {len(control)} control and {len(treated)} treatment samples, "
                f"needed {cfg.ell0} and {cfg.ell1}")
        xi_cfg = cfg.xi_config(pop)
        y_bar_1 = float(np.mean(treated[:cfg.ell1]))
        if cfg.mirrored:
            holds = xi_event_holds_mirrored(y_bar_1, expected_baseline(pop, pop.always_takers()), xi_cfg)
            self.a_star = 0 if holds else 1
        else:
            holds = xi_event_holds(y_bar_1, float(np.mean(control[:cfg.ell0])), xi_cfg)
            self.a_star = 1 if holds else 0
        platform.trajectory.a_star.append(self.a_star)
        self.log("xi", f"{'holds' if holds else 'fails'}, a* = {self.a_star}")

    def certify(self) -> Certificates:
        """Returns the sampling-stage certificates, checking δ < P̂[ξ]/8 for each certified type."""
        pop = self.platform.population
        cfg = self.cfg
        if cfg.compliant_types:
            return cfg.forced_certificates(pop)
        result = certify_sampling(pop, cfg.xi_config(pop), cfg.rho, cfg.monte_carlo_iters,
                                  self.platform.monte_carlo_rng, cfg.mirrored)
        for (u, p_xi) in enumerate(result.p_xi):
            if p_xi is None:
                continue
            self.log("ceiling", f"type {u}: P[xi] = {p_xi}, rho <= {result.ceilings[u]:.6g}")
            if result.certificates.holds(u) and not xi_delta_admissible(cfg.effective_xi_delta, p_xi.value):
                raise ConfigurationError(
                    f"xi delta {cfg.effective_xi_delta!r} is not below P[xi]/8 = {p_xi.value / 8!r} for type {u}")
        return result.certificates

    def explore(self, cuts: Sequence[int]) -> ProcessEffect:
        """
        (process) Serves sampling-stage rounds up to each cut in turn, with
        exactly ρ·(segment length) explore rounds chosen uniformly within
        each segment.
        """
        rng = self.platform.planner_rng
        explore_arm = 0 if self.cfg.mirrored else 1
        assert self.a_star is not None
        previous = 0
        for cut in cuts:
            length = cut - previous
            count = round(self.cfg.rho * length)
            picks = set(rng.choice(length, size=count, replace=False).tolist())
            for i in range(length):
                explore = i in picks
                yield from self.recommend(explore_arm if explore else self.a_star, Stage.SAMPLING, explore=explore)
            previous = cut

    def second_stage(self) -> ProcessEffect:
        """(process) Runs the exploration rounds and collects their samples."""
        platform = self.platform
        pop = platform.population
        cfg = self.cfg
        platform.enter(Stage.SAMPLING)
        platform.publish(self.certify(), SamplingPosterior(pop, cfg.rho, cfg.xi_config(pop), cfg.mirrored))
        start = len(platform.trajectory)
        if cfg.ell_mode is LengthMode.FIXED:
            yield from self.explore(cfg.checkpoints + (cfg.ell,) if cfg.ell not in cfg.checkpoints
                                    else cfg.checkpoints)
        else:
            target = max(racing_thresholds(pop, cfg.tau))
            total = 0
            while True:
                yield from self.explore((cfg.ell,))
                total += cfg.ell
                bound = estimate_binary(platform.trajectory.samples(start), cfg.delta, cfg.sigma_g).bound
                if bound <= target or total + cfg.ell > cfg.effective_ell_cap:
                    self.log("length", f"ell = {total}, A = {bound:.6g}, target {target:.6g}")
                    break
        self.samples = platform.trajectory.samples(start)

    def run(self) -> ProcessEffect:
        """(process) Runs the first stage and then the exploration rounds."""
        yield from self.first_stage()
        yield from self.second_stage()


class RacingStage(Planner):
    """Alternates control and treatment recommendations until the effect's sign is known."""

    def __init__(self, cfg: PolicyConfig, s0: SampleSet, initial: Optional[Certificates]=None):
        """
        Constructs a `RacingStage` seeded with the samples `s0`. `initial`
        gives the certificates that hold from the start (by default the
        configured compliant types).
        """
        self.cfg = cfg
        self.s0 = s0
        self.initial = initial
        self.winner: Optional[int] = None
        self.estimate: Optional[EstimateWithBound] = None
        """The estimate of the best sample set when the stage ended."""

    def _decided(self) -> bool:
        assert self.estimate is not None
        return bool(abs(self.estimate.theta_hat) > self.estimate.bound)

    def run(self) -> ProcessEffect:
        """(process) Races until a winner is declared, then recommends it until the horizon."""
        platform = self.platform
        pop = platform.population
        cfg = self.cfg
        log = platform.trajectory
        platform.enter(Stage.RACING)
        thresholds = racing_thresholds(pop, cfg.tau)
        current = self.s0
        self.estimate = race_estimate(current, cfg)
        best_phase = 0
        log.bounds.append(self.estimate.bound)
        log.best.append(best_phase)
        base = cfg.forced_certificates(pop) if self.initial is None else self.initial
        certs = racing_certificates(pop, cfg, base, self.estimate.bound, 0, thresholds)
        platform.publish(certs, RacingPosterior(self.estimate.bound))

        q = 0
        while not self._decided() and platform.now < cfg.horizon:
            q += 1
            start = len(log)
            for z in (0, 1):
                for _ in range(cfg.h):
                    if platform.now >= cfg.horizon:
                        break
                    yield from self.recommend(z, Stage.RACING, q)
            current = current.concat(log.samples(start))
            candidate = race_estimate(current, cfg)
            if candidate.bound < self.estimate.bound:
                (self.estimate, best_phase) = (candidate, q)
            log.bounds.append(self.estimate.bound)
            log.best.append(best_phase)
            self.log("phase", f"q = {q}, A = {self.estimate.bound:.6g} from phase {best_phase}")
            certs = racing_certificates(pop, cfg, certs, self.estimate.bound, q, thresholds)
            platform.publish(certs, RacingPosterior(self.estimate.bound), q)

        if not self._decided():
            self.log("horizon", f"no winner after {q} phases")
            return
        self.winner = 1 if self.estimate.theta_hat > 0 else 0
        log.winner = self.winner
        log.stop_round = platform.now
        self.log("stop", f"winner {self.winner}, theta_hat = {self.estimate.theta_hat:.6g}")
        platform.enter(Stage.EXPLOIT)
        while platform.now < cfg.horizon:
            yield from self.recommend(self.winner, Stage.EXPLOIT)


class CombinedPolicy(Planner):
    """The sampling stage followed by the racing stage, seeded with its samples."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.sampling = SamplingStage(cfg)
        self.racing: Optional[RacingStage] = None

    def initialize(self, platform: Platform) -> None:
        super().initialize(platform)
        self.sampling.initialize(platform)

    def run(self) -> ProcessEffect:
        """(process) Runs both stages."""
        yield from self.sampling.run()
        assert self.sampling.samples is not None
        self.racing = RacingStage(self.cfg, self.sampling.samples)
        self.racing.initialize(self.platform)
        yield from self.racing.run()


class RandomizedTrial(Planner):
    """Recommends control or treatment by a fair coin, to a population assumed compliant."""

    def __init__(self, n: int, compliant_types: Optional[Sequence[int]]=None):
        """
        Constructs a trial of `n` rounds. `compliant_types` defaults to every
        type.
        """
        if n < 1:
            raise ConfigurationError(f"a trial needs at least one round, got {n}")
        self.n = n
        self.compliant_types = compliant_types

    def run(self) -> ProcessEffect:
        platform = self.platform
        count = len(platform.population.types)
        platform.enter(Stage.TRIAL)
        compliant = range(count) if self.compliant_types is None else self.compliant_types
        platform.publish(Certificates.forced(count, list(compliant)))
        for _ in range(self.n):
            z = int(platform.planner_rng.integers(0, 2))
            yield from self.recommend(z, Stage.TRIAL)


def _platform(pop: PopulationSpec, theta: Union[float, Sequence[float]], streams: Streams,
              behavior: BehaviorModel, logger: Logger) -> Platform:
    return Platform(Environment(), pop, theta, streams, behavior, logger)


def run_sampling_stage(cfg: PolicyConfig, pop: PopulationSpec, theta: float, streams: Streams,
                       behavior: BehaviorModel=TheoryDriven(),
                       logger: Logger=Logger()) -> tuple[SampleSet, TrajectoryLog]:
    """
    Runs the sampling stage on its own and returns its samples and the
    trajectory.
    """
    _require_binary(pop, cfg)
    planner = SamplingStage(cfg)
    log = _platform(pop, theta, streams, behavior, logger).run(planner)
    assert planner.samples is not None
    return (planner.samples, log)


def run_racing_stage(s0: SampleSet, cfg: PolicyConfig, pop: PopulationSpec, theta: float, streams: Streams,
                     behavior: BehaviorModel=TheoryDriven(),
                     logger: Logger=Logger()) -> tuple[TrajectoryLog, Optional[int], EstimateWithBound]:
    """
    Runs the racing stage on its own, seeded with `s0`, for `cfg.horizon`
    rounds. Returns the trajectory, the winner (None if undecided) and the
    final estimate.
    """
    _require_binary(pop, cfg)
    planner = RacingStage(cfg, s0)
    log = _platform(pop, theta, streams, behavior, logger).run(planner)
    assert planner.estimate is not None
    return (log, planner.winner, planner.estimate)


def run_combined_policy(cfg: PolicyConfig, pop: PopulationSpec, theta: float, streams: Streams,
                        behavior: BehaviorModel=TheoryDriven(),
                        logger: Logger=Logger()) -> tuple[TrajectoryLog, RegretReport]:
    """Runs the sampling stage then the racing stage, and reports pseudo-regret against `theta`."""
    _require_binary(pop, cfg)
    log = _platform(pop, theta, streams, behavior, logger).run(CombinedPolicy(cfg))
    return (log, pseudo_regret(log, theta))


def run_randomized_trial(n: int, pop: PopulationSpec, theta: float, streams: Streams,
                         compliant_types: Optional[Sequence[int]]=None, behavior: BehaviorModel=TheoryDriven(),
                         logger: Logger=Logger()) -> tuple[SampleSet, TrajectoryLog]:
    """Runs a fair-coin trial of `n` rounds and returns its samples and the trajectory."""
    _require_binary(pop)
    log = _platform(pop, theta, streams, behavior, logger).run(RandomizedTrial(n, compliant_types))
    return (log.samples(), log)


__all__ = ['SamplingPosterior', 'RacingPosterior', 'SamplingStage', 'RacingStage', 'CombinedPolicy',
           'RandomizedTrial', 'run_sampling_stage', 'run_racing_stage', 'run_combined_policy',
           'run_randomized_trial']

import unittest

from ..agents import AgentDraw, BayesMC, StageView, TypeSpec, agent_action
from ..compliance import certify_racing, full_compliance_phase, racing_threshold
from ..stats import GaussianBaseline, TruncatedGaussian
from .karm import _FORCED


def _population(noise_std: float=1.0, hyper_std: float=0.0, hyper_gap: float=0.0,
                fractions: tuple[float, float]=(0.5, 0.5)) -> PopulationSpec:
    types = (
        TypeSpec(PriorSpec(TruncatedGaussian(-0.5, 1.0), GaussianBaseline(0.0, hyper_std, noise_std)), fractions[0]),
        TypeSpec(PriorSpec(TruncatedGaussian(0.9, 1.0), GaussianBaseline(hyper_gap, hyper_std, noise_std)),
                 fractions[1]),
    )
    return PopulationSpec(tuple(t for t in types if t.fraction > 0))


class TestSamplingStage(unittest.TestCase):
    def test_certified_never_takers_comply(self) -> None:
        # With a quiet baseline P[ξ] is about 0.11, so ρ = 0.1 is within the ceiling.
        pop = _population(noise_std=0.1)
        cfg = PolicyConfig(rho=0.1, ell=200, delta=0.05, xi_delta=1e-4, horizon=1000, ell0=100, ell1=100,
                           sigma_g=0.1, checkpoints=(50, 100))
        (samples, log) = run_sampling_stage(cfg, pop, 0.5, Streams(31))
        self.assertEqual(len(samples), 200)
        sampling = log.stage_records(Stage.SAMPLING)
        self.assertEqual(sum(r.explore for r in sampling), 20)
        self.assertEqual(sum(r.explore for r in sampling[:50]), 5)
        self.assertEqual(sum(r.explore for r in sampling[:100]), 10)
        self.assertTrue(all(r.complied for r in sampling if r.type_index == 0))
        self.assertTrue(all(r.z is None for r in log.stage_records(Stage.FIRST)))
        self.assertEqual(len(log.stage_records(Stage.FIRST)), 400)
        self.assertEqual([stage for (_, stage) in log.boundaries], [Stage.FIRST, Stage.SAMPLING])
        a_star = log.a_star[0]
        self.assertTrue(all(r.z == a_star for r in sampling if not r.explore))
        self.assertTrue(all(r.z == 1 for r in sampling if r.explore))

    def test_missing_never_takers(self) -> None:
        pop = _population(fractions=(0.0, 1.0))
        cfg = PolicyConfig(rho=0.1, ell=100, delta=0.05, horizon=1000, ell0=10, ell1=10)
        self.assertRaises(InsufficientFirstStageError, run_sampling_stage, cfg, pop, 0.5, Streams(32))

    def test_mirrored(self) -> None:
        pop = _population(fractions=(0.0, 1.0))
        cfg = PolicyConfig(rho=0.1, ell=100, delta=0.05, horizon=1000, ell0=10, ell1=10, mirrored=True,
                           compliant_types=_FORCED)
        (samples, log) = run_sampling_stage(cfg, pop, 0.5, Streams(33))
        sampling = log.stage_records(Stage.SAMPLING)
        self.assertEqual(sum(r.explore for r in sampling), 10)
        self.assertTrue(all(r.z == 0 and r.x == 0 for r in sampling if r.explore))
        self.assertEqual(len(log.stage_records(Stage.FIRST)), 20)

    def test_empirical_length(self) -> None:
        pop = _population()
        cfg = PolicyConfig(rho=0.01, ell=100, delta=0.05, horizon=1000, ell0=10, ell1=10,
                           ell_mode=LengthMode.EMPIRICAL, ell_cap=300, compliant_types=_FORCED)
        (samples, log) = run_sampling_stage(cfg, pop, 0.5, Streams(34))
        self.assertIn(len(samples), (100, 200, 300))
        self.assertEqual(sum(r.explore for r in log.stage_records(Stage.SAMPLING)), len(samples) // 100)

    def test_reproducible(self) -> None:
        pop = _population()
        cfg = PolicyConfig(rho=0.01, ell=100, delta=0.05, horizon=1000, ell0=10, ell1=10, compliant_types=_FORCED)
        (a, _) = run_sampling_stage(cfg, pop, 0.5, Streams(35))
        (b, _) = run_sampling_stage(cfg, pop, 0.5, Streams(35))
        self.assertEqual(a.records(), b.records())


class TestRacingStage(unittest.TestCase):
    def test_immediate_stop(self) -> None:
        pop = _population(noise_std=0.0)
        s0 = SampleSet.from_records([(0, 0, 0.0), (1, 1, 0.5), (0, 0, 0.0), (1, 1, 0.5)])
        cfg = PolicyConfig(rho=0.1, ell=10, delta=0.05, horizon=10, sigma_g=0.0)
        (log, winner, est) = run_racing_stage(s0, cfg, pop, 0.5, Streams(36))
        self.assertEqual(winner, 1)
        self.assertEqual(est.bound, 0.0)
        self.assertEqual(log.stop_round, 0)
        self.assertEqual([r.z for r in log.records], [1] * 10)
        self.assertEqual(len(log.stage_records(Stage.RACING)), 0)

    def test_phases_and_flip(self) -> None:
        pop = _population(noise_std=0.05)
        theta = 0.02
        (s0, _) = run_randomized_trial(200, pop, theta, Streams(37), compliant_types=_FORCED)
        cfg = PolicyConfig(rho=0.1, ell=10, delta=0.05, horizon=20000, sigma_g=0.05, compliant_types=_FORCED)
        (log, winner, est) = run_racing_stage(s0, cfg, pop, theta, Streams(38))

        self.assertTrue(all(a >= b for (a, b) in zip(log.bounds, log.bounds[1:])))
        racing = log.stage_records(Stage.RACING)
        for q in range(1, max(r.phase for r in racing)):
            zs = [r.z for r in racing if r.phase == q]
            self.assertEqual(zs, [0] * cfg.h + [1] * cfg.h)

        # The always-taker type turns compliant by the phase the full-compliance argument gives.
        expected = full_compliance_phase(4 * racing_threshold(pop.types[1].prior, cfg.tau), 0.5, cfg.h,
                                         cfg.sigma_g, cfg.delta)
        flips = [f for f in log.flips if f.type_index == 1]
        self.assertEqual(len(flips), 1)
        self.assertLessEqual(flips[0].phase, expected)
        self.assertTrue(all(r.complied for r in racing if r.phase > flips[0].phase))

        if winner is not None:
            self.assertEqual(winner, 1)
            assert log.stop_round is not None
            self.assertTrue(all(r.z == winner for r in log.records[log.stop_round:]))
            self.assertEqual(len(log), cfg.horizon)

    def test_undecided(self) -> None:
        pop = _population()
        (s0, _) = run_randomized_trial(20, pop, 0.01, Streams(39), compliant_types=_FORCED)
        cfg = PolicyConfig(rho=0.1, ell=10, delta=0.05, horizon=250, compliant_types=_FORCED)
        (log, winner, _) = run_racing_stage(s0, cfg, pop, 0.01, Streams(40))
        self.assertIsNone(winner)
        self.assertTrue(log.undecided)
        self.assertEqual(len(log), 250)
        # Three phases of 100 rounds would overrun the horizon; the last is cut short.
        self.assertEqual(len(log.bounds), 4)


class TestCombinedPolicy(unittest.TestCase):
    def test_composition(self) -> None:
        pop = _population()
        cfg = PolicyConfig(rho=0.01, ell=100, delta=0.05, horizon=1000, ell0=10, ell1=10, compliant_types=_FORCED)
        (log, report) = run_combined_policy(cfg, pop, 0.5, Streams(41))
        self.assertEqual([stage for (_, stage) in log.boundaries][:3], [Stage.FIRST, Stage.SAMPLING, Stage.RACING])
        self.assertEqual(len(log), 1000)
        self.assertEqual(len(log.stage_records(Stage.SAMPLING)), 100)
        self.assertAlmostEqual(report.total, pseudo_regret(log, 0.5).total, places=12)
        late = sum(0.5 - 0.5 * r.x for r in log.records if r.stage in (Stage.RACING, Stage.EXPLOIT))
        self.assertAlmostEqual(report.post_sampling, late, places=9)


class TestBayesMC(unittest.TestCase):
    def test_complies_when_certified(self) -> None:
        # A bound this small certifies both types; Bayesian agents then follow too.
        pop = _population()
        bound = 0.001
        self.assertEqual(certify_racing(pop, bound, 0.43).complies, (True, True))
        view = StageView(Certificates.none(2), RacingPosterior(bound))
        rng = Streams(42).stream('behavior')
        model = BayesMC(posterior_samples=4000)
        self.assertEqual(agent_action(AgentDraw(0, 0.0, 0), 1, view, model, pop, rng), 1)
        self.assertEqual(agent_action(AgentDraw(1, 0.0, 0), 0, view, model, pop, rng), 0)

    def test_uninformative_race(self) -> None:
        pop = _population()
        view = StageView(Certificates.none(2), RacingPosterior(float('inf')))
        rng = Streams(43).stream('behavior')
        self.assertEqual(agent_action(AgentDraw(0, 0.0, 0), 1, view, BayesMC(), pop, rng), 0)
