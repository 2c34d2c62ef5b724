"""
Recommendation policies for k treatments that every agent ranks the same
way a priori (arm 1 first).

`SamplingStageK` leaves the first ℓ agents unadvised, so each takes arm 1,
then explores the other arms one phase at a time: each phase of ℓ/ρ rounds
recommends the explored arm in ℓ uniformly chosen rounds and, in the rest,
either that arm (if the samples so far make it look better than everything
tried) or arm 1.

`RacingStageK` is successive elimination on the IV estimate: each phase
recommends every active arm h times, and arms whose estimate trails the
leader by more than the current bound leave the active set. After an
elimination the race goes on with an estimate of the surviving arms alone.
"""


from __future__ import annotations
from typing import Optional, Sequence
from math import isfinite

import numpy as np
from numpy.random import Generator
from simpy import Environment

from ..agents import BehaviorModel, PolicyPosterior, PopulationSpec, TheoryDriven
from ..compliance import (Certificates, PriorSpec, estimate_xi_probability_k, exploration_probability_bound_k,
                          racing_thresholds, simulate_xi_k, xi_event_holds_k)
from ..errors import ConfigurationError
from ..estimator import EstimateWithBound, SampleSet
from ..logging import Logger
from ..platform import Planner, Platform
from ..stats import Streams
from ..util import ProcessEffect
from . import PolicyConfig, RegretReport, Stage, TrajectoryLog, pseudo_regret, race_estimate, racing_certificates


def planner_arm_means(pop: PopulationSpec) -> tuple[float, ...]:
    """
    The prior means the planner tests arms against: for each arm, the
    smallest prior mean over the types, so an arm is only promoted when every
    type would agree.
    """
    k = pop.arm_count
    return tuple(min(t.prior.arm_means[i] for t in pop.types) for i in range(k))


class SamplingPosteriorK(PolicyPosterior):
    """One exploration phase as agents model it."""

    def __init__(self, pop: PopulationSpec, cfg: PolicyConfig, arm: int):
        super().__init__()
        self.pop = pop
        self.cfg = cfg
        self.arm = arm
        self.arm_means = planner_arm_means(pop)

    def recommendation_likelihood(self, prior: PriorSpec, theta: np.ndarray, recommendation: int,
                                  rng: Generator) -> np.ndarray:
        cfg = self.cfg
        xi = simulate_xi_k(self.pop, self.arm_means, theta, cfg.ell, cfg.sigma_g, cfg.effective_xi_delta, rng)
        p_arm = cfg.rho + (1 - cfg.rho) * xi[:, self.arm - 1].astype(np.float64)
        if recommendation == self.arm:
            return p_arm
        if recommendation == 1:
            return 1 - p_arm
        return np.zeros(len(theta))


class RacingPosteriorK(PolicyPosterior):
    """
    Successive elimination as agents model it: estimates lie within the
    bound of θ, and until one arm survives, every active arm is equally
    likely to be recommended.
    """

    def __init__(self, bound: float, active: Sequence[int]):
        super().__init__()
        self.bound = bound
        self.active = tuple(active)

    def recommendation_likelihood(self, prior: PriorSpec, theta: np.ndarray, recommendation: int,
                                  rng: Generator) -> np.ndarray:
        n = len(theta)
        if recommendation not in self.active:
            return np.zeros(n)
        uniform = 1 / len(self.active)
        if not isfinite(self.bound):
            return np.full(n, uniform)
        columns = np.array(self.active) - 1
        estimate = (theta + rng.uniform(-self.bound, self.bound, theta.shape))[:, columns]
        survivors = estimate.max(axis=1, keepdims=True) - estimate <= self.bound
        over = survivors.sum(axis=1) == 1
        chosen = survivors[:, self.active.index(recommendation)].astype(np.float64)
        return np.where(over, chosen, uniform)


def _require_arms(pop: PopulationSpec, cfg: PolicyConfig) -> None:
    if pop.arm_count < 2 or cfg.arm_count != pop.arm_count:
        raise ConfigurationError(
            f"k-arm policies need a k-arm population and configuration, got {pop.arm_count} and {cfg.arm_count}")


class SamplingStageK(Planner):
    """Explores arms 2..k in turn after ℓ rounds of arm 1."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.samples: Optional[SampleSet] = None
        self.a_star: list[int] = []
        """The exploit recommendation of each exploration phase (arms 2..k)."""

    def certify(self) -> Certificates:
        pop = self.platform.population
        cfg = self.cfg
        if cfg.compliant_types:
            return cfg.forced_certificates(pop)
        certs = Certificates.none(len(pop.types))
        for (u, t) in enumerate(pop.types):
            means = t.prior.arm_means
            if any(m <= 0 for m in means[1:]):
                self.log("ceiling", f"type {u}: cannot be incentivized")
                continue
            p_xi = estimate_xi_probability_k(pop, cfg.ell, cfg.sigma_g, cfg.effective_xi_delta,
                                             cfg.monte_carlo_iters, self.platform.monte_carlo_rng, u)
            ceiling = exploration_probability_bound_k(means, p_xi.value)
            self.log("ceiling", f"type {u}: P[xi] = {p_xi}, rho <= {ceiling:.6g}")
            if cfg.rho <= ceiling:
                certs = certs.certify(u, "rho")
        return certs

    def _sample_means(self, start: int, arms: int) -> Optional[list[float]]:
        records = self.platform.trajectory.records[start:]
        means = []
        for arm in range(1, arms + 1):
            ys = [r.y for r in records if r.x == arm]
            if not ys:
                return None
            means.append(float(np.mean(ys)))
        return means

    def run(self) -> ProcessEffect:
        """(process) Runs the arm-1 rounds and one exploration phase per further arm."""
        platform = self.platform
        pop = platform.population
        cfg = self.cfg
        rng = platform.planner_rng
        start = len(platform.trajectory)
        platform.enter(Stage.FIRST)
        platform.publish(cfg.forced_certificates(pop))
        for _ in range(cfg.ell):
            yield from self.recommend(None, Stage.FIRST)

        platform.enter(Stage.SAMPLING)
        certs = self.certify()
        mu = planner_arm_means(pop)
        length = cfg.phase_length
        for arm in range(2, pop.arm_count + 1):
            y_bars = self._sample_means(start, arm - 1)
            holds = y_bars is not None and xi_event_holds_k(y_bars, mu[arm - 1], cfg.ell, cfg.sigma_g,
                                                             cfg.effective_xi_delta)
            a_star = arm if holds else 1
            self.a_star.append(a_star)
            platform.trajectory.a_star.append(a_star)
            self.log("xi", f"arm {arm}: {'holds' if holds else 'fails'}, a* = {a_star}")
            platform.publish(certs, SamplingPosteriorK(pop, cfg, arm), arm)
            picks = set(rng.choice(length, size=cfg.ell, replace=False).tolist())
            for i in range(length):
                explore = i in picks
                yield from self.recommend(arm if explore else a_star, Stage.SAMPLING, arm, explore)
        self.samples = platform.trajectory.samples(start)


class RacingStageK(Planner):
    """Successive elimination on the IV estimate of the best sample set."""

    def __init__(self, cfg: PolicyConfig, s0: SampleSet, initial: Optional[Certificates]=None):
        self.cfg = cfg
        self.s0 = s0
        self.initial = initial
        self.winner: Optional[int] = None
        self.estimate: Optional[EstimateWithBound] = None

    def _race_estimate(self, current: SampleSet, active: Sequence[int]) -> EstimateWithBound:
        """
        The estimate of `current` on the arms still racing. Once an arm has
        been eliminated its sample count stops growing, so the surviving
        arms are estimated from the samples that recommended and took them.
        """
        k = current.arm_count
        if len(active) == k:
            return race_estimate(current, self.cfg)
        sub = race_estimate(current.restrict(active), self.cfg)
        theta_hat = np.full(k, np.nan)
        theta_hat[np.array(active) - 1] = sub.theta_hat
        return EstimateWithBound(theta_hat, sub.bound, sub.delta, sub.denominator)

    def _eliminate(self, active: list[int]) -> list[int]:
        assert self.estimate is not None
        bound = self.estimate.bound
        if not isfinite(bound):
            return active
        theta_hat = self.estimate.theta_hat
        leader = max(theta_hat[i - 1] for i in active)
        return [i for i in active if leader - theta_hat[i - 1] <= bound]

    def run(self) -> ProcessEffect:
        """(process) Eliminates arms until one survives, then recommends it until the horizon."""
        platform = self.platform
        pop = platform.population
        cfg = self.cfg
        log = platform.trajectory
        platform.enter(Stage.RACING)
        thresholds = racing_thresholds(pop, cfg.tau, cfg.monte_carlo_iters, platform.monte_carlo_rng)
        current = self.s0
        self.estimate = race_estimate(current, cfg)
        best_phase = 0
        log.bounds.append(self.estimate.bound)
        log.best.append(best_phase)
        active = list(range(1, pop.arm_count + 1))
        base = cfg.forced_certificates(pop) if self.initial is None else self.initial
        certs = racing_certificates(pop, cfg, base, self.estimate.bound, 0, thresholds)
        platform.publish(certs, RacingPosteriorK(self.estimate.bound, active))

        q = 0
        while True:
            active = self._eliminate(active)
            log.active_sets.append(tuple(active))
            if len(active) == 1 or platform.now >= cfg.horizon:
                break
            q += 1
            start = len(log)
            for _ in range(cfg.h):
                for arm in active:
                    if platform.now >= cfg.horizon:
                        break
                    yield from self.recommend(arm, Stage.RACING, q)
            current = current.concat(log.samples(start))
            candidate = self._race_estimate(current, active)
            if candidate.bound < self.estimate.bound:
                (self.estimate, best_phase) = (candidate, q)
            log.bounds.append(self.estimate.bound)
            log.best.append(best_phase)
            self.log("phase", f"q = {q}, A = {self.estimate.bound:.6g}, active {active}")
            certs = racing_certificates(pop, cfg, certs, self.estimate.bound, q, thresholds)
            platform.publish(certs, RacingPosteriorK(self.estimate.bound, active), q)

        if len(active) != 1:
            self.log("horizon", f"no winner after {q} phases, active {active}")
            return
        self.winner = active[0]
        log.winner = self.winner
        log.stop_round = platform.now
        self.log("stop", f"winner {self.winner}")
        platform.enter(Stage.EXPLOIT)
        while platform.now < cfg.horizon:
            yield from self.recommend(self.winner, Stage.EXPLOIT)


class CombinedPolicyK(Planner):
    """`SamplingStageK` followed by `RacingStageK`, seeded with its samples."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.sampling = SamplingStageK(cfg)
        self.racing: Optional[RacingStageK] = None

    def initialize(self, platform: Platform) -> None:
        super().initialize(platform)
        self.sampling.initialize(platform)

    def run(self) -> ProcessEffect:
        yield from self.sampling.run()
        assert self.sampling.samples is not None
        self.racing = RacingStageK(self.cfg, self.sampling.samples)
        self.racing.initialize(self.platform)
        yield from self.racing.run()


def _platform(pop: PopulationSpec, theta: Sequence[float], streams: Streams, behavior: BehaviorModel,
              logger: Logger) -> Platform:
    if len(theta) != pop.arm_count:
        raise ConfigurationError(f"theta has {len(theta)} entries for {pop.arm_count} arms")
    return Platform(Environment(), pop, tuple(theta), streams, behavior, logger)


def run_sampling_stage_k(cfg: PolicyConfig, pop: PopulationSpec, theta: Sequence[float], streams: Streams,
                         behavior: BehaviorModel=TheoryDriven(),
                         logger: Logger=Logger()) -> tuple[SampleSet, TrajectoryLog]:
    """Runs the k-arm sampling stage on its own and returns its samples and the trajectory."""
    _require_arms(pop, cfg)
    planner = SamplingStageK(cfg)
    log = _platform(pop, theta, streams, behavior, logger).run(planner)
    assert planner.samples is not None
    return (planner.samples, log)


def run_racing_stage_k(s0: SampleSet, cfg: PolicyConfig, pop: PopulationSpec, theta: Sequence[float],
                       streams: Streams, behavior: BehaviorModel=TheoryDriven(),
                       logger: Logger=Logger()) -> tuple[TrajectoryLog, Optional[int], EstimateWithBound]:
    """
    Runs successive elimination on its own, seeded with `s0`. Returns the
    trajectory, the surviving arm (None if undecided at the horizon) and the
    final estimate.
    """
    _require_arms(pop, cfg)
    planner = RacingStageK(cfg, s0)
    log = _platform(pop, theta, streams, behavior, logger).run(planner)
    assert planner.estimate is not None
    return (log, planner.winner, planner.estimate)


def run_combined_policy_k(cfg: PolicyConfig, pop: PopulationSpec, theta: Sequence[float], streams: Streams,
                          behavior: BehaviorModel=TheoryDriven(),
                          logger: Logger=Logger()) -> tuple[TrajectoryLog, RegretReport]:
    """Runs both k-arm stages and reports pseudo-regret against `theta`."""
    _require_arms(pop, cfg)
    log = _platform(pop, theta, streams, behavior, logger).run(CombinedPolicyK(cfg))
    return (log, pseudo_regret(log, theta))


__all__ = ['planner_arm_means', 'SamplingPosteriorK', 'RacingPosteriorK', 'SamplingStageK', 'RacingStageK',
           'CombinedPolicyK', 'run_sampling_stage_k', 'run_racing_stage_k', 'run_combined_policy_k']

import unittest

from ..agents import AgentDraw, BayesMC, StageView, TypeSpec, agent_action
from ..stats import GaussianBaseline, TruncatedGaussian


_FORCED = (0,)


def _population(means: Sequence[float]=(0.6, 0.4, 0.2), noise_std: float=1.0) -> PopulationSpec:
    prior = PriorSpec(arm_priors=tuple(TruncatedGaussian(m, 0.3) for m in means),
                      baseline=GaussianBaseline(0.0, 0.0, noise_std))
    return PopulationSpec((TypeSpec(prior, 1.0),))


class TestSamplingStageK(unittest.TestCase):
    def test_phase_structure(self) -> None:
        pop = _population()
        cfg = PolicyConfig(rho=0.25, ell=20, delta=0.05, horizon=1000, arm_count=3, compliant_types=_FORCED)
        (samples, log) = run_sampling_stage_k(cfg, pop, (0.9, 0.2, 0.1), Streams(51))
        first = log.stage_records(Stage.FIRST)
        self.assertEqual(len(samples), 2 * 80)
        self.assertEqual(len(first), 20)
        self.assertTrue(all(r.z is None and r.x == 1 for r in first))
        for arm in (2, 3):
            phase = [r for r in log.stage_records(Stage.SAMPLING) if r.phase == arm]
            self.assertEqual(len(phase), 80)
            self.assertEqual(sum(r.explore for r in phase), 20)
            self.assertTrue(all(r.z == arm for r in phase if r.explore))
            self.assertTrue(all(r.complied for r in phase))
        # Arm 1 already pays far more than either later arm's prior mean.
        self.assertEqual(log.a_star, [1, 1])
        self.assertTrue(all(r.z == 1 for r in log.stage_records(Stage.SAMPLING) if not r.explore))

    def test_two_arms(self) -> None:
        pop = _population((0.6, 0.4))
        cfg = PolicyConfig(rho=0.5, ell=10, delta=0.05, horizon=1000, arm_count=2, compliant_types=_FORCED)
        (samples, log) = run_sampling_stage_k(cfg, pop, (0.9, 0.2), Streams(52))
        self.assertEqual(len(log.a_star), 1)
        self.assertEqual(len(log.stage_records(Stage.SAMPLING)), 20)

    def test_mismatch(self) -> None:
        cfg = PolicyConfig(rho=0.5, ell=10, delta=0.05, horizon=1000, arm_count=2)
        self.assertRaises(ConfigurationError, run_sampling_stage_k, cfg, _population(), (0.1, 0.2, 0.3), Streams(0))


class TestRacingStageK(unittest.TestCase):
    def test_survivor(self) -> None:
        pop = _population((0.6, 0.4), noise_std=0.05)
        theta = (0.2, 0.7)
        cfg = PolicyConfig(rho=0.5, ell=10, delta=0.05, horizon=5000, arm_count=2, sigma_g=0.05, h=20,
                           compliant_types=_FORCED)
        (s0, _) = run_sampling_stage_k(cfg, pop, theta, Streams(53))
        (log, winner, est) = run_racing_stage_k(s0, cfg, pop, theta, Streams(54))
        self.assertEqual(winner, 2)
        self.assertTrue(all(a >= b for (a, b) in zip(log.bounds, log.bounds[1:])))
        for (before, after) in zip(log.active_sets, log.active_sets[1:]):
            self.assertTrue(set(after) <= set(before))
        assert log.stop_round is not None
        self.assertTrue(all(r.z == 2 for r in log.records[log.stop_round:]))

    def test_immediate_elimination(self) -> None:
        pop = _population((0.6, 0.4), noise_std=0.0)
        s0 = SampleSet.from_records([(1, 1, 0.2), (2, 2, 0.7), (1, 1, 0.2), (2, 2, 0.7)], arm_count=2)
        cfg = PolicyConfig(rho=0.5, ell=10, delta=0.05, horizon=10, arm_count=2, sigma_g=0.0)
        (log, winner, _) = run_racing_stage_k(s0, cfg, pop, (0.2, 0.7), Streams(55))
        self.assertEqual(winner, 2)
        self.assertEqual(log.active_sets, [(2,)])
        self.assertEqual(len(log.stage_records(Stage.RACING)), 0)

    def test_staggered_elimination(self) -> None:
        # Arm 1 leaves long before arm 3; the race must still end.
        pop = _population(noise_std=0.05)
        theta = (0.1, 0.5, 0.47)
        cfg = PolicyConfig(rho=0.5, ell=10, delta=0.05, horizon=5000, arm_count=3, sigma_g=0.05, h=20,
                           compliant_types=_FORCED)
        (s0, _) = run_sampling_stage_k(cfg, pop, theta, Streams(59))
        (log, winner, _) = run_racing_stage_k(s0, cfg, pop, theta, Streams(60))
        self.assertIn((2, 3), log.active_sets)
        self.assertEqual(log.active_sets[-1], (2,))
        self.assertEqual(winner, 2)
        assert log.stop_round is not None
        self.assertLess(log.stop_round, cfg.horizon)

    def test_monotone_elimination(self) -> None:
        pop = _population(noise_std=0.05)
        theta = (0.1, 0.5, 0.3)
        cfg = PolicyConfig(rho=0.5, ell=10, delta=0.05, horizon=600, arm_count=3, sigma_g=0.05, h=10,
                           compliant_types=_FORCED)
        (s0, _) = run_sampling_stage_k(cfg, pop, theta, Streams(61))
        kept_best = 0
        for seed in range(100):
            (log, _, _) = run_racing_stage_k(s0, cfg, pop, theta, Streams(1000 + seed))
            self.assertTrue(all(a >= b for (a, b) in zip(log.bounds, log.bounds[1:])))
            for (before, after) in zip(log.active_sets, log.active_sets[1:]):
                self.assertTrue(set(after) <= set(before))
            kept_best += 2 in log.active_sets[-1]
        self.assertGreaterEqual(kept_best, 95)

    def test_combined(self) -> None:
        pop = _population(noise_std=0.1)
        theta = (0.1, 0.5, 0.3)
        cfg = PolicyConfig(rho=0.25, ell=20, delta=0.05, horizon=3000, arm_count=3, sigma_g=0.1, h=10,
                           compliant_types=_FORCED)
        (log, report) = run_combined_policy_k(cfg, pop, theta, Streams(56))
        self.assertEqual(len(log), 3000)
        self.assertAlmostEqual(report.total, sum(0.5 - theta[r.x - 1] for r in log.records), places=9)
        if log.winner is not None:
            self.assertEqual(log.winner, 2)


class TestRacingPosteriorK(unittest.TestCase):
    def test_bayes_follows_clear_race(self) -> None:
        pop = _population()
        rng = Streams(57).stream('behavior')
        view = StageView(Certificates.none(1), RacingPosteriorK(0.001, (1, 2, 3)))
        self.assertEqual(agent_action(AgentDraw(0, 0.0, 0), 3, view, BayesMC(4000), pop, rng), 3)
        self.assertEqual(agent_action(AgentDraw(0, 0.0, 0), None, view, BayesMC(), pop, rng), 1)

    def test_inactive_arm(self) -> None:
        posterior = RacingPosteriorK(0.1, (1, 2))
        theta = np.zeros((5, 3))
        self.assertEqual(list(posterior.recommendation_likelihood(_population().types[0].prior, theta, 3,
                                                                  Streams(58).stream('behavior'))), [0.0] * 5)
