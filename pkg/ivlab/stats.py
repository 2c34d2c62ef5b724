"""
Seeded randomness and the distributions used by the experiments.

Every random quantity in a run is drawn from one of a fixed set of named
numpy streams derived from a single 64-bit seed (see `Streams`). Streams with
different names never share state, so the order in which one part of the
simulation consumes randomness cannot perturb another part.

Treatment-effect priors are Gaussians truncated onto an interval (by default
`[-1, 1]`), sampled by inverse CDF. Baseline rewards are hierarchical
Gaussians: a run-level mean is drawn once per type from a hyper-prior, then
each agent's baseline reward is drawn around it.
"""


from __future__ import annotations
from typing import Optional, Union
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, SeedSequence
from scipy.special import ndtr
from scipy.stats import truncnorm

from .errors import ConfigurationError


STREAM_NAMES = ('baselines', 'agents', 'planner', 'behavior', 'monte_carlo', 'theta')
"""
Names of the independent sub-streams. The position of a name in this tuple
is its spawn key, so appending names keeps existing streams unchanged.
"""


class Streams:
    """
    A family of independent random streams derived from one seed.
    """

    def __init__(self, seed: int):
        """
        Constructs the stream family for `seed`, which must be an unsigned
        64-bit integer.
        """
        if not (0 <= seed < 2**64):
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        self.seed = seed

    def stream(self, name: str) -> Generator:
        """
        Returns a fresh generator for the named stream. Calling this twice
        with the same name returns two generators in the same initial state;
        callers should keep the generator they were given.
        """
        return self.substream(name, 0)

    def substream(self, name: str, index: int) -> Generator:
        """
        Returns the generator for shard `index` of the named stream, for
        splitting work (for example Monte Carlo iteration ranges) across
        workers without sharing state.
        """
        if name not in STREAM_NAMES:
            raise ConfigurationError(f"unknown random stream {name!r}")
        key = (STREAM_NAMES.index(name), index)
        return np.random.default_rng(SeedSequence(self.seed, spawn_key=key))

    def __repr__(self) -> str:
        return "Streams(seed=%r)" % (self.seed,)


@dataclass(frozen=True)
class TruncatedGaussian:
    """
    A Gaussian with the given mean and standard deviation, conditioned on
    lying in `[lower, upper]`.
    """
    mean: float
    std_dev: float
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.std_dev > 0:
            raise ConfigurationError(f"truncated Gaussian std_dev must be positive, got {self.std_dev!r}")
        if not self.lower < self.upper:
            raise ConfigurationError(
                f"truncated Gaussian interval is empty: lower={self.lower!r}, upper={self.upper!r}")

    def _frozen(self):
        alpha = (self.lower - self.mean) / self.std_dev
        beta = (self.upper - self.mean) / self.std_dev
        return truncnorm(alpha, beta, loc=self.mean, scale=self.std_dev)

    def sample(self, rng: Generator, size: Optional[int]=None) -> Union[float, np.ndarray]:
        """Draws one value (or an array of `size` values) by inverse CDF."""
        u = rng.random(size)
        x = np.clip(self._frozen().ppf(u), self.lower, self.upper)
        return float(x) if size is None else x

    def tail(self, threshold: float) -> float:
        """Returns P[X > threshold]."""
        return truncated_tail_probability(self, threshold)

    def expectation(self) -> float:
        """Returns E[X], the mean of the truncated distribution."""
        return truncated_mean(self)


@dataclass(frozen=True)
class GaussianBaseline:
    """
    A hierarchical Gaussian baseline reward. The run-level mean is drawn from
    Normal(hyper_mean, hyper_std²); each agent's baseline is then drawn from
    Normal(run-level mean, noise_std²). `noise_std` is the σ_g that enters
    the approximation bounds.
    """
    hyper_mean: float = 0.0
    hyper_std: float = 0.0
    noise_std: float = 1.0

    def __post_init__(self):
        if self.hyper_std < 0 or self.noise_std < 0:
            raise ConfigurationError(
                f"baseline standard deviations must be non-negative, got {self.hyper_std!r}, {self.noise_std!r}")

    def realize_mean(self, rng: Generator) -> float:
        """Draws the run-level mean μ_g."""
        return float(rng.normal(self.hyper_mean, self.hyper_std))

    def draw(self, realized_mean: float, rng: Generator) -> float:
        """Draws one agent's baseline reward around the run-level mean."""
        return float(rng.normal(realized_mean, self.noise_std))


def sample_truncated_gaussian(dist: TruncatedGaussian, rng: Generator) -> float:
    """
    Draws one value from `dist` using `rng`. The result always lies in
    `[dist.lower, dist.upper]`.
    """
    return dist.sample(rng)


def normal_tail(z: float) -> float:
    """Returns 1 − Φ(z), the upper tail of the standard normal distribution."""
    return float(ndtr(-z))


def truncated_tail_probability(dist: TruncatedGaussian, threshold: float) -> float:
    """
    Returns P[X > threshold] for X ~ `dist`, in closed form as a ratio of
    normal CDF differences.
    """
    if threshold <= dist.lower:
        return 1.0
    if threshold >= dist.upper:
        return 0.0
    return float(min(1.0, max(0.0, dist._frozen().sf(threshold))))


def truncated_mean(dist: TruncatedGaussian) -> float:
    """Returns the mean of `dist` in closed form."""
    return float(dist._frozen().mean())


__all__ = ['STREAM_NAMES', 'Streams', 'TruncatedGaussian', 'GaussianBaseline', 'sample_truncated_gaussian',
           'normal_tail', 'truncated_tail_probability', 'truncated_mean']

import unittest
from math import erf, exp, pi, sqrt


def _phi(x: float) -> float:
    return 0.5 * (1 + erf(x / sqrt(2)))


def _pdf(x: float) -> float:
    return exp(-x * x / 2) / sqrt(2 * pi)


class TestStreams(unittest.TestCase):
    def test_reproducible(self) -> None:
        a = Streams(7).stream('agents').random(5)
        b = Streams(7).stream('agents').random(5)
        self.assertTrue(np.array_equal(a, b))

    def test_independent_names(self) -> None:
        streams = Streams(7)
        self.assertFalse(np.array_equal(streams.stream('agents').random(5),
                                        streams.stream('planner').random(5)))
        self.assertFalse(np.array_equal(streams.substream('monte_carlo', 0).random(5),
                                        streams.substream('monte_carlo', 1).random(5)))

    def test_consumption_does_not_leak(self) -> None:
        # Draining one stream leaves another stream's values unchanged.
        streams = Streams(3)
        expected = streams.stream('planner').random(3)
        streams.stream('agents').random(1000)
        self.assertTrue(np.array_equal(streams.stream('planner').random(3), expected))

    def test_bad_seed(self) -> None:
        self.assertRaises(ConfigurationError, Streams, -1)
        self.assertRaises(ConfigurationError, Streams, 2**64)
        self.assertRaises(ConfigurationError, Streams(0).stream, 'nonesuch')


class TestTruncatedGaussian(unittest.TestCase):
    def test_support(self) -> None:
        rng = Streams(1).stream('theta')
        dist = TruncatedGaussian(0.0, 1.0)
        for _ in range(1000):
            x = sample_truncated_gaussian(dist, rng)
            self.assertTrue(-1.0 <= x <= 1.0)

    def test_degenerate_limit(self) -> None:
        rng = Streams(2).stream('theta')
        x = sample_truncated_gaussian(TruncatedGaussian(0.0, 1e-9), rng)
        self.assertAlmostEqual(x, 0.0, delta=1e-6)

    def test_invalid(self) -> None:
        self.assertRaises(ConfigurationError, TruncatedGaussian, 0.0, 1.0, 1.0, 1.0)
        self.assertRaises(ConfigurationError, TruncatedGaussian, 0.0, 1.0, 1.0, -1.0)
        self.assertRaises(ConfigurationError, TruncatedGaussian, 0.0, 0.0)

    def test_empirical_mean(self) -> None:
        dist = TruncatedGaussian(-0.5, 1.0)
        draws = dist.sample(Streams(3).stream('theta'), size=10**6)
        # Closed-form oracle: mean = μ + σ(φ(α) − φ(β)) / (Φ(β) − Φ(α)).
        alpha, beta = -0.5, 1.5
        z = _phi(beta) - _phi(alpha)
        oracle = -0.5 + (_pdf(alpha) - _pdf(beta)) / z
        self.assertAlmostEqual(truncated_mean(dist), oracle, places=9)
        se = draws.std() / np.sqrt(len(draws))
        self.assertLess(abs(draws.mean() - oracle), 3 * se)

    def test_tail(self) -> None:
        dist = TruncatedGaussian(-0.5, 1.0)
        self.assertEqual(truncated_tail_probability(dist, -1.0), 1.0)
        self.assertEqual(truncated_tail_probability(dist, -3.0), 1.0)
        self.assertEqual(truncated_tail_probability(dist, 1.0), 0.0)
        oracle = (_phi(1.5) - _phi(0.93)) / (_phi(1.5) - _phi(-0.5))
        self.assertAlmostEqual(truncated_tail_probability(dist, 0.43), oracle, places=9)
        self.assertAlmostEqual(dist.tail(0.43), 0.1751, places=4)

    def test_tail_monotone(self) -> None:
        dist = TruncatedGaussian(0.9, 1.0)
        values = [truncated_tail_probability(dist, t) for t in np.linspace(-1.5, 1.5, 61)]
        self.assertTrue(all(a >= b for (a, b) in zip(values, values[1:])))


class TestNormalTail(unittest.TestCase):
    def test_values(self) -> None:
        self.assertEqual(normal_tail(0.0), 0.5)
        self.assertAlmostEqual(normal_tail(40.0), 0.0, delta=1e-12)
        self.assertAlmostEqual(normal_tail(1.5), 0.0668072, delta=1e-7)
        self.assertAlmostEqual(normal_tail(-1.5), 1 - 0.0668072, delta=1e-7)


class TestGaussianBaseline(unittest.TestCase):
    def test_degenerate(self) -> None:
        rng = Streams(4).stream('baselines')
        baseline = GaussianBaseline(hyper_mean=0.3, hyper_std=0.0, noise_std=0.0)
        mu = baseline.realize_mean(rng)
        self.assertEqual(mu, 0.3)
        self.assertEqual(baseline.draw(mu, rng), 0.3)

    def test_invalid(self) -> None:
        self.assertRaises(ConfigurationError, GaussianBaseline, 0.0, -1.0, 1.0)
        self.assertRaises(ConfigurationError, GaussianBaseline, 0.0, 1.0, -1.0)
