"""
The stream of arriving agents.

Each round one agent arrives with a private type drawn from the population
mix and a baseline reward drawn from that type's baseline model. Given the
planner's recommendation (if any), the agent picks an action according to a
`BehaviorModel`, and receives reward θ·x + g (binary) or θ^x + g (k arms).

Two behavior models are provided:

* `TheoryDriven` follows a recommendation exactly when the agent's type is
  certified compliant for the current stage (see `ivlab.compliance`), and
  otherwise plays its prior-preferred action.
* `BayesMC` computes E[θ | z] by simulating the published policy under the
  agent's own prior (through a `PolicyPosterior`) and plays the action with
  the highest posterior mean.
"""


from __future__ import annotations
from typing import Optional, Sequence, Union
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.random import Generator

from .compliance import Certificates, Preference, PriorSpec
from .errors import ConfigurationError


_FRACTION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TypeSpec:
    """An agent type: its prior and its share of the population."""
    prior: PriorSpec
    fraction: float

    def __post_init__(self):
        if not (0 <= self.fraction <= 1):
            raise ConfigurationError(f"type fraction must lie in [0, 1], got {self.fraction!r}")


@dataclass(frozen=True)
class PopulationSpec:
    """
    A mixture of agent types. Fractions sum to 1. All types use binary
    priors, or all use k-arm priors with the same k.
    """
    types: tuple[TypeSpec, ...]

    def __post_init__(self):
        if len(self.types) == 0:
            raise ConfigurationError("a population needs at least one type")
        total = sum(t.fraction for t in self.types)
        if abs(total - 1) > _FRACTION_TOLERANCE:
            raise ConfigurationError(f"type fractions must sum to 1, got {total!r}")
        if len({t.prior.arm_count for t in self.types}) != 1:
            raise ConfigurationError("all types must share the same arm count")

    @property
    def arm_count(self) -> int:
        """1 for binary populations, otherwise k."""
        return self.types[0].prior.arm_count

    @property
    def fractions(self) -> tuple[float, ...]:
        return tuple(t.fraction for t in self.types)

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.fractions)

    def _with_preference(self, preference: Preference) -> list[int]:
        if self.arm_count != 1:
            return []
        return [u for (u, t) in enumerate(self.types) if t.prior.preference is preference]

    def never_takers(self) -> list[int]:
        """Indices of the types that prefer control (binary populations)."""
        return self._with_preference(Preference.NEVER_TAKER)

    def always_takers(self) -> list[int]:
        """Indices of the types that prefer treatment (binary populations)."""
        return self._with_preference(Preference.ALWAYS_TAKER)

    @property
    def p0(self) -> float:
        """Population fraction of never-takers."""
        return sum(self.types[u].fraction for u in self.never_takers())

    @property
    def p1(self) -> float:
        """Population fraction of always-takers."""
        return sum(self.types[u].fraction for u in self.always_takers())

    def realize_baselines(self, rng: Generator) -> np.ndarray:
        """Draws the run-level baseline mean μ_g of every type."""
        return np.array([t.prior.baseline.realize_mean(rng) for t in self.types])

    def expected_baselines(self) -> np.ndarray:
        """The hyper-means, used when no run-level means have been drawn."""
        return np.array([t.prior.baseline.hyper_mean for t in self.types])


@dataclass(frozen=True)
class AgentDraw:
    """One arriving agent."""
    type_index: int
    baseline_g: float
    round: int


class PolicyPosterior:
    """
    The published policy of one stage, as agents model it. Subclasses
    implement `recommendation_likelihood`, the probability that the policy
    issues a given recommendation in a world with the given effects.
    Posterior means are cached per (type, recommendation), since every
    agent of a type sees the same published policy within a stage.
    """

    def __init__(self):
        self._cache: dict[tuple[int, int, int], Union[float, np.ndarray]] = {}

    def recommendation_likelihood(self, prior: PriorSpec, theta: np.ndarray, recommendation: int,
                                  rng: Generator) -> np.ndarray:
        """
        Returns P[z = recommendation | world] for each world, given effects
        `theta` drawn from the agent's `prior`. Subclasses must implement this.
        """
        raise NotImplementedError

    def posterior_mean(self, type_index: int, prior: PriorSpec, recommendation: int, samples: int,
                       rng: Generator) -> Union[float, np.ndarray]:
        """Returns E[θ | z = recommendation] under `prior`, from `samples` simulated worlds."""
        key = (type_index, recommendation, samples)
        if key not in self._cache:
            theta = prior.sample_theta(rng, samples)
            weight = self.recommendation_likelihood(prior, theta, recommendation, rng)
            total = float(weight.sum())
            if total == 0:
                # The recommendation is impossible under this prior; it carries no information.
                mean = prior.prior_mean_theta if prior.is_binary() else np.array(prior.arm_means)
            else:
                mean = (weight @ theta) / total
            self._cache[key] = float(mean) if prior.is_binary() else mean
        return self._cache[key]


@dataclass(frozen=True)
class StageView:
    """What an arriving agent knows about the stage it arrives in."""
    certificates: Certificates
    """Which types the planner has certified as compliant."""
    posterior: Optional[PolicyPosterior] = field(default=None, compare=False)
    """The published policy, or None if recommendations carry no information."""


class BehaviorModel:
    """
    A base class for agent behavior models. This class is intended to be
    subclassed.
    """

    def choose(self, agent: AgentDraw, prior: PriorSpec, recommendation: Optional[int], view: StageView,
               rng: Generator) -> int:
        """Returns the action of `agent`. Subclasses must implement this method."""
        raise NotImplementedError

    def __str__(self) -> str:
        return self.__class__.__name__


class TheoryDriven(BehaviorModel):
    """Complies exactly when the agent's type is certified for the stage."""

    def choose(self, agent: AgentDraw, prior: PriorSpec, recommendation: Optional[int], view: StageView,
               rng: Generator) -> int:
        if recommendation is None or not view.certificates.holds(agent.type_index):
            return prior.preferred_action()
        return recommendation


class BayesMC(BehaviorModel):
    """Plays the action with the highest posterior mean, estimated by simulation."""

    def __init__(self, posterior_samples: int=2000):
        if posterior_samples < 1:
            raise ConfigurationError(f"posterior_samples must be at least 1, got {posterior_samples}")
        self.posterior_samples = posterior_samples

    def choose(self, agent: AgentDraw, prior: PriorSpec, recommendation: Optional[int], view: StageView,
               rng: Generator) -> int:
        if recommendation is None or view.posterior is None:
            return prior.preferred_action()
        mean = view.posterior.posterior_mean(agent.type_index, prior, recommendation, self.posterior_samples, rng)
        if prior.is_binary():
            return 1 if mean > 0 else 0
        return int(np.argmax(mean)) + 1

    def __str__(self) -> str:
        return f"BayesMC(posterior_samples={self.posterior_samples})"


def draw_agent(pop: PopulationSpec, t: int, rng: Generator, realized_means: Optional[np.ndarray]=None) -> AgentDraw:
    """
    Draws the agent arriving in round `t`: a type with the configured
    fractions, then a baseline reward around that type's run-level mean
    (`realized_means`, defaulting to the hyper-means).
    """
    u = int(np.searchsorted(pop._cumulative, rng.random(), side='right'))
    u = min(u, len(pop.types) - 1)
    if realized_means is None:
        realized_means = pop.expected_baselines()
    g = pop.types[u].prior.baseline.draw(float(realized_means[u]), rng)
    return AgentDraw(u, g, t)


def agent_action(agent: AgentDraw, recommendation: Optional[int], view: StageView, model: BehaviorModel,
                 pop: PopulationSpec, rng: Generator) -> int:
    """Returns the action `agent` takes given the recommendation it receives (None for none)."""
    return model.choose(agent, pop.types[agent.type_index].prior, recommendation, view, rng)


def reward(theta: Union[float, Sequence[float]], action: int, agent: AgentDraw) -> float:
    """Returns θ·x + g for binary actions, or θ^x + g for arm `x` in 1..k."""
    if np.ndim(theta) == 0:
        assert action in (0, 1)
        return float(theta) * action + agent.baseline_g
    return float(theta[action - 1]) + agent.baseline_g


__all__ = ['TypeSpec', 'PopulationSpec', 'AgentDraw', 'PolicyPosterior', 'StageView', 'BehaviorModel',
           'TheoryDriven', 'BayesMC', 'draw_agent', 'agent_action', 'reward']

import unittest
from math import sqrt

from .stats import GaussianBaseline, Streams, TruncatedGaussian


def _two_types() -> PopulationSpec:
    return PopulationSpec((
        TypeSpec(PriorSpec(TruncatedGaussian(-0.5, 1.0), GaussianBaseline(0.0, 1.0, 1.0)), 0.5),
        TypeSpec(PriorSpec(TruncatedGaussian(0.9, 1.0), GaussianBaseline(0.1, 1.0, 1.0)), 0.5),
    ))


class _FixedPosterior(PolicyPosterior):
    def __init__(self, likelihoods: dict[int, float]):
        super().__init__()
        self.likelihoods = likelihoods

    def recommendation_likelihood(self, prior: PriorSpec, theta: np.ndarray, recommendation: int,
                                  rng: Generator) -> np.ndarray:
        # Recommendation z is issued only in worlds where θ has the sign it suggests.
        positive = (theta > 0) if theta.ndim == 1 else (np.argmax(theta, axis=1) + 1 == recommendation)
        if theta.ndim == 1 and recommendation == 0:
            positive = ~positive
        return np.where(positive, 1.0, self.likelihoods.get(recommendation, 0.0))


class TestPopulation(unittest.TestCase):
    def test_validation(self) -> None:
        prior = PriorSpec(TruncatedGaussian(-0.5, 1.0))
        self.assertRaises(ConfigurationError, PopulationSpec, ())
        self.assertRaises(ConfigurationError, PopulationSpec, (TypeSpec(prior, 0.5),))
        self.assertRaises(ConfigurationError, TypeSpec, prior, 1.5)
        k_arm = PriorSpec(arm_priors=(TruncatedGaussian(0.5, 0.3), TruncatedGaussian(0.2, 0.3)))
        self.assertRaises(ConfigurationError, PopulationSpec, (TypeSpec(prior, 0.5), TypeSpec(k_arm, 0.5)))

    def test_classes(self) -> None:
        pop = _two_types()
        self.assertEqual(pop.never_takers(), [0])
        self.assertEqual(pop.always_takers(), [1])
        self.assertEqual((pop.p0, pop.p1), (0.5, 0.5))


class TestDrawAgent(unittest.TestCase):
    def test_single_type(self) -> None:
        pop = PopulationSpec((TypeSpec(PriorSpec(TruncatedGaussian(0.9, 1.0)), 1.0),))
        rng = Streams(1).stream('agents')
        self.assertTrue(all(draw_agent(pop, t, rng).type_index == 0 for t in range(100)))

    def test_fractions(self) -> None:
        pop = _two_types()
        rng = Streams(2).stream('agents')
        n = 10**5
        type0 = sum(draw_agent(pop, t, rng).type_index == 0 for t in range(n))
        self.assertLess(abs(type0 / n - 0.5), 3 * sqrt(0.25 / n))

    def test_baseline(self) -> None:
        pop = PopulationSpec((TypeSpec(PriorSpec(TruncatedGaussian(0.9, 1.0), GaussianBaseline(0.0, 0.0, 0.0)), 1.0),))
        agent = draw_agent(pop, 3, Streams(3).stream('agents'), realized_means=np.array([0.25]))
        self.assertEqual(agent, AgentDraw(0, 0.25, 3))


class TestAgentAction(unittest.TestCase):
    def setUp(self) -> None:
        self.pop = _two_types()
        self.rng = Streams(4).stream('behavior')
        self.never = AgentDraw(0, 0.0, 0)
        self.always = AgentDraw(1, 0.0, 0)

    def test_theory_driven(self) -> None:
        model = TheoryDriven()
        certified = StageView(Certificates.forced(2, [0]))
        self.assertEqual(agent_action(self.never, None, certified, model, self.pop, self.rng), 0)
        self.assertEqual(agent_action(self.never, 1, certified, model, self.pop, self.rng), 1)
        self.assertEqual(agent_action(self.always, 0, certified, model, self.pop, self.rng), 1)
        uncertified = StageView(Certificates.none(2))
        self.assertEqual(agent_action(self.never, 1, uncertified, model, self.pop, self.rng), 0)

    def test_bayes_mc(self) -> None:
        model = BayesMC(posterior_samples=4000)
        informative = StageView(Certificates.none(2), _FixedPosterior({}))
        self.assertEqual(agent_action(self.never, 1, informative, model, self.pop, self.rng), 1)
        self.assertEqual(agent_action(self.always, 0, informative, model, self.pop, self.rng), 0)
        # Recommendations issued regardless of θ carry no information.
        uninformative = StageView(Certificates.none(2), _FixedPosterior({0: 1.0, 1: 1.0}))
        self.assertEqual(agent_action(self.never, 1, uninformative, model, self.pop, self.rng), 0)
        self.assertEqual(agent_action(self.always, 0, uninformative, model, self.pop, self.rng), 1)
        self.assertEqual(agent_action(self.never, 1, StageView(Certificates.none(2)), model, self.pop, self.rng), 0)

    def test_bayes_mc_agrees_when_certified(self) -> None:
        # A recommendation that is wrong about the sign of θ only 2% of the time.
        posterior = _FixedPosterior({0: 0.02, 1: 0.02})
        certified = Certificates.forced(2, [0, 1])
        rng = Streams(5).stream('agents')
        (theory, bayes) = (TheoryDriven(), BayesMC(posterior_samples=1000))
        agreed = 0
        for t in range(200):
            agent = draw_agent(self.pop, t, rng)
            z = int(rng.integers(2))
            view = StageView(certified, posterior)
            agreed += (agent_action(agent, z, view, theory, self.pop, self.rng) ==
                       agent_action(agent, z, view, bayes, self.pop, self.rng))
        self.assertGreaterEqual(agreed, 190)

    def test_bayes_mc_k_arm(self) -> None:
        prior = PriorSpec(arm_priors=(TruncatedGaussian(0.3, 0.5), TruncatedGaussian(0.2, 0.5),
                                      TruncatedGaussian(0.1, 0.5)))
        pop = PopulationSpec((TypeSpec(prior, 1.0),))
        view = StageView(Certificates.none(1), _FixedPosterior({}))
        agent = AgentDraw(0, 0.0, 0)
        self.assertEqual(agent_action(agent, None, view, BayesMC(), pop, self.rng), 1)
        self.assertEqual(agent_action(agent, 3, view, BayesMC(), pop, self.rng), 3)


class TestReward(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertEqual(reward(0.5, 0, AgentDraw(0, 0.3, 0)), 0.3)
        self.assertEqual(reward(0.5, 1, AgentDraw(0, 0.3, 0)), 0.8)
        self.assertAlmostEqual(reward((0.1, 0.2, 0.3), 2, AgentDraw(0, -0.05, 0)), 0.15, places=15)
