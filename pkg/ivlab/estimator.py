"""
Treatment-effect estimation from interaction logs.

A `SampleSet` is an ordered log of (recommendation `z`, action `x`,
reward `y`) triples. With `arm_count == 1` the treatment is binary: `z` and
`x` are 0 (control) or 1 (treatment) and the Wald ratio of centered sums
estimates the scalar effect θ. With `arm_count == k >= 2`, `z` and `x` are
arm labels `1..k` and the IV estimate solves the `k × k` system
(Σ zᵢxᵢᵀ) θ = Σ zᵢyᵢ over one-hot encodings.

The approximation bound A(S, δ) is the high-probability half-width of the IV
estimate's error. It is `math.inf` whenever the instrument carries no
information (zero Wald denominator, or a singular interaction matrix), so a
racing loop that waits for |θ̂| > A never stops on uninformative data.

Noise enters the bounds through σ_g, the sub-Gaussian norm of the baseline
reward (`GaussianBaseline.noise_std`). The run-level spread of the baseline
means is not part of σ_g.
"""


from __future__ import annotations
from typing import Iterable, Sequence, Union
from dataclasses import dataclass
from math import inf, isfinite, log, sqrt

import numpy as np

from .errors import IVLabError, ConfigurationError
from .util import check_probability


BINARY = 1
"""The `arm_count` of a binary (control/treatment) sample set."""

_ZERO_TOLERANCE = 1e-12
"""Relative tolerance below which a denominator or singular value counts as zero."""


class WeakInstrumentError(IVLabError):
    """The recommendation and the action are uncorrelated in-sample."""
    pass


class DegenerateError(IVLabError):
    """Every sample took the same action, so there is nothing to compare."""
    pass


class RankDeficientError(IVLabError):
    """The arm-interaction matrix Σ zᵢxᵢᵀ is singular."""

    def __init__(self, uncovered: Sequence[int]):
        self.uncovered = tuple(uncovered)
        """Arms that were never recommended or never taken."""
        if self.uncovered:
            detail = "arm(s) " + ", ".join(str(a) for a in self.uncovered) + " never recommended or never taken"
        else:
            detail = "recommendations do not separate the arms"
        super().__init__(f"interaction matrix is singular: {detail}")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """
    An ordered log of (z, x, y) observations. Use `SampleSet.from_records` to
    build one from triples.
    """
    z: np.ndarray
    """Recommendations."""
    x: np.ndarray
    """Actions."""
    y: np.ndarray
    """Rewards."""
    arm_count: int = BINARY
    """1 for binary treatment, otherwise the number of arms `k`."""

    def __post_init__(self):
        if self.arm_count < 1:
            raise ConfigurationError(f"arm_count must be at least 1, got {self.arm_count!r}")
        if not (len(self.z) == len(self.x) == len(self.y)):
            raise ConfigurationError("z, x and y must have equal lengths")
        (lo, hi) = self.codomain()
        for (name, values) in (("z", self.z), ("x", self.x)):
            if len(values) > 0 and (values.min() < lo or values.max() > hi):
                raise ConfigurationError(f"{name} values must lie in {lo}..{hi}")

    @classmethod
    def from_records(cls, records: Iterable[tuple[int, int, float]], arm_count: int=BINARY) -> SampleSet:
        """Constructs a `SampleSet` from (z, x, y) triples."""
        rows = list(records)
        z = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
        x = np.fromiter((r[1] for r in rows), dtype=np.int64, count=len(rows))
        y = np.fromiter((r[2] for r in rows), dtype=np.float64, count=len(rows))
        return cls(z, x, y, arm_count)

    def codomain(self) -> tuple[int, int]:
        """Returns the inclusive range of valid `z` and `x` values."""
        return (0, 1) if self.arm_count == BINARY else (1, self.arm_count)

    def is_binary(self) -> bool:
        """Is this a binary (control/treatment) sample set?"""
        return self.arm_count == BINARY

    def records(self) -> list[tuple[int, int, float]]:
        """Returns the (z, x, y) triples in order."""
        return [(int(z), int(x), float(y)) for (z, x, y) in zip(self.z, self.x, self.y)]

    def prefix(self, n: int) -> SampleSet:
        """Returns the first `n` observations."""
        return SampleSet(self.z[:n], self.x[:n], self.y[:n], self.arm_count)

    def concat(self, other: SampleSet) -> SampleSet:
        """Returns this log followed by `other`."""
        assert other.arm_count == self.arm_count
        return SampleSet(np.concatenate((self.z, other.z)), np.concatenate((self.x, other.x)),
                         np.concatenate((self.y, other.y)), self.arm_count)

    def restrict(self, arms: Sequence[int]) -> SampleSet:
        """
        Returns the k-arm observations that both recommend and take one of
        `arms`, renumbered so that `arms[i]` becomes arm i+1.
        """
        if self.is_binary() or len(arms) < 2:
            raise ConfigurationError("restrict needs a k-arm sample set and at least two arms")
        index = np.zeros(self.arm_count + 1, dtype=np.int64)
        index[np.asarray(arms)] = np.arange(1, len(arms) + 1)
        keep = (index[self.z] > 0) & (index[self.x] > 0)
        return SampleSet(index[self.z][keep], index[self.x][keep], self.y[keep], len(arms))

    def __len__(self) -> int:
        return len(self.y)

    def __repr__(self) -> str:
        return "SampleSet(n=%r, arm_count=%r)" % (len(self), self.arm_count)


@dataclass(frozen=True, eq=False)
class EstimateWithBound:
    """A point estimate paired with its approximation bound A(S, δ)."""
    theta_hat: Union[float, np.ndarray]
    """The estimate: a float for binary treatment, a length-k vector otherwise. NaN when not identified."""
    bound: float
    """A(S, δ); `math.inf` when the instrument is uninformative."""
    delta: float
    """The failure probability of the bound."""
    denominator: float
    """Σ(x−x̄)(z−z̄) for binary treatment; σ_min(Σ zᵢxᵢᵀ) for k arms."""

    def is_informative(self) -> bool:
        """Is the bound finite?"""
        return isfinite(self.bound)

    def error(self, theta: Union[float, Sequence[float]]) -> float:
        """Returns |θ̂ − θ| (binary) or ‖θ̂ − θ‖₂ (k arms)."""
        return float(np.linalg.norm(np.atleast_1d(self.theta_hat) - np.atleast_1d(theta)))

    def covers(self, theta: Union[float, Sequence[float]]) -> bool:
        """Does the bound contain the true effect?"""
        return self.error(theta) <= self.bound


def _require_binary(s: SampleSet) -> None:
    if not s.is_binary():
        raise ConfigurationError(f"expected a binary sample set, got arm_count={s.arm_count}")
    if len(s) == 0:
        raise ConfigurationError("sample set is empty")


def _centered_cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a - a.mean(), b - b.mean()))


def _is_zero(value: float, n: int) -> bool:
    return abs(value) <= _ZERO_TOLERANCE * max(n, 1)


def wald_denominator(s: SampleSet) -> float:
    """Returns Σ(xᵢ−x̄)(zᵢ−z̄) for a binary sample set."""
    _require_binary(s)
    return _centered_cross(s.x.astype(np.float64), s.z.astype(np.float64))


def wald_estimate(s: SampleSet) -> float:
    """
    Returns the Wald (binary 2SLS) estimate Σ(yᵢ−ȳ)(zᵢ−z̄) / Σ(xᵢ−x̄)(zᵢ−z̄).
    Raises `WeakInstrumentError` if the denominator is zero.
    """
    den = wald_denominator(s)
    if _is_zero(den, len(s)):
        raise WeakInstrumentError("recommendations and actions are uncorrelated in this sample set")
    return _centered_cross(s.y, s.z.astype(np.float64)) / den


def ols_estimate(s: SampleSet) -> float:
    """
    Returns the naive regression of reward on action,
    Σ(yᵢ−ȳ)(xᵢ−x̄) / Σ(xᵢ−x̄)², i.e. the difference of mean rewards by action.
    Raises `DegenerateError` if every sample took the same action.
    """
    _require_binary(s)
    x = s.x.astype(np.float64)
    den = _centered_cross(x, x)
    if _is_zero(den, len(s)):
        raise DegenerateError("every sample took the same action")
    return _centered_cross(s.y, x) / den


def approximation_bound_binary(s: SampleSet, delta: float, sigma_g: float) -> float:
    """
    Returns A(S, δ) = 2σ_g√(2n·log(2/δ)) / |Σ(xᵢ−x̄)(zᵢ−z̄)|, or `math.inf` if
    the denominator is zero.
    """
    check_probability("delta", delta)
    den = wald_denominator(s)
    if _is_zero(den, len(s)):
        return inf
    return 2 * sigma_g * sqrt(2 * len(s) * log(2 / delta)) / abs(den)


def estimate_binary(s: SampleSet, delta: float, sigma_g: float) -> EstimateWithBound:
    """Returns the Wald estimate together with A(S, δ)."""
    bound = approximation_bound_binary(s, delta, sigma_g)
    theta_hat = wald_estimate(s) if isfinite(bound) else float('nan')
    return EstimateWithBound(theta_hat, bound, delta, wald_denominator(s))


def _require_arms(s: SampleSet) -> None:
    if s.is_binary():
        raise ConfigurationError("expected a k-arm sample set with arm_count >= 2")
    if len(s) == 0:
        raise ConfigurationError("sample set is empty")


def interaction_matrix(s: SampleSet) -> np.ndarray:
    """
    Returns the `k × k` matrix Σ zᵢxᵢᵀ over one-hot encodings; entry (a, b)
    counts rounds recommended arm a+1 that took arm b+1.
    """
    _require_arms(s)
    k = s.arm_count
    m = np.zeros((k, k))
    np.add.at(m, (s.z - 1, s.x - 1), 1.0)
    return m


def _smallest_singular_value(m: np.ndarray) -> float:
    return float(np.linalg.svd(m, compute_uv=False).min())


def _is_singular(m: np.ndarray, smin: float) -> bool:
    scale = float(np.abs(m).max())
    return scale == 0 or smin < _ZERO_TOLERANCE * scale


def iv_estimate_k(s: SampleSet) -> np.ndarray:
    """
    Returns θ̂ = (Σ zᵢxᵢᵀ)⁻¹ Σ zᵢyᵢ for a k-arm sample set.
    Raises `RankDeficientError` naming the uncovered arms if the interaction
    matrix is singular.
    """
    m = interaction_matrix(s)
    if _is_singular(m, _smallest_singular_value(m)):
        uncovered = [a + 1 for a in range(s.arm_count) if m[a, :].sum() == 0 or m[:, a].sum() == 0]
        raise RankDeficientError(uncovered)
    rhs = np.bincount(s.z - 1, weights=s.y, minlength=s.arm_count)
    return np.linalg.solve(m, rhs)


def approximation_bound_k(s: SampleSet, delta: float, sigma_g: float) -> float:
    """
    Returns A(S, δ) = σ_g√(2nk·log(k/δ)) / σ_min(Σ zᵢxᵢᵀ), or `math.inf` if
    the interaction matrix is singular.

    Some drafts of this bound carry an extra factor of 2 in the numerator;
    this is the version without it.
    """
    check_probability("delta", delta)
    m = interaction_matrix(s)
    smin = _smallest_singular_value(m)
    if _is_singular(m, smin):
        return inf
    k = s.arm_count
    return sigma_g * sqrt(2 * len(s) * k * log(k / delta)) / smin


def estimate_k(s: SampleSet, delta: float, sigma_g: float) -> EstimateWithBound:
    """Returns the k-arm IV estimate together with A(S, δ)."""
    bound = approximation_bound_k(s, delta, sigma_g)
    theta_hat = iv_estimate_k(s) if isfinite(bound) else np.full(s.arm_count, np.nan)
    return EstimateWithBound(theta_hat, bound, delta, _smallest_singular_value(interaction_matrix(s)))


def estimate(s: SampleSet, delta: float, sigma_g: float) -> EstimateWithBound:
    """Dispatches to `estimate_binary` or `estimate_k` by `s.arm_count`."""
    return estimate_binary(s, delta, sigma_g) if s.is_binary() else estimate_k(s, delta, sigma_g)


def pairwise_bound(a: float) -> float:
    """
    Returns √2·A, the bound on the error of any pairwise difference
    θ̂ᵃ − θ̂ᵇ implied by an approximation bound A on the whole vector.
    """
    if not a >= 0:
        raise ConfigurationError(f"approximation bound must be non-negative, got {a!r}")
    return sqrt(2) * a


def denominator_lower_bound(n: int, z_bar: float, p_c: float, delta: float) -> float:
    """
    Returns a (1−δ)-probability lower bound on |Σ(xᵢ−x̄)(zᵢ−z̄)| for `n`
    samples with mean recommendation `z_bar` when a fraction `p_c` of agents
    complies. With full compliance the bound is exact: n·z̄·(1−z̄).
    """
    check_probability("z_bar", z_bar)
    check_probability("p_c", p_c, open_low=False, open_high=False)
    check_probability("delta", delta)
    exact = n * z_bar * (1 - z_bar)
    if p_c == 1:
        return exact
    penalty = (3 - z_bar) * sqrt(n * z_bar * log(3 / delta) / (2 * (1 - z_bar)))
    return max(0.0, exact * p_c - penalty)


def full_compliance_bound(n: int, sigma_g: float, delta: float) -> float:
    """
    Returns 8σ_g√(2log(2/δ)/n), the error bound for samples collected while
    every agent complies with alternating recommendations.
    """
    check_probability("delta", delta)
    return 8 * sigma_g * sqrt(2 * log(2 / delta) / n)


def sampling_stage_bound(ell: int, rho: float, p0: float, sigma_g: float, delta: float) -> float:
    """
    Returns the upper bound on A(S_ℓ, δ) for the ℓ samples of the sampling
    stage when a fraction `p0` of agents complies with exploration
    probability `rho`; `math.inf` while ℓ is too small for the bound to apply.
    """
    check_probability("delta", delta)
    check_probability("rho", rho)
    l5 = log(5 / delta)
    den = rho * (1 - rho) * p0 * sqrt(ell) - (3 - rho) * sqrt(rho * l5 / (2 * (1 - rho)))
    return inf if den <= 0 else 2 * sigma_g * sqrt(2 * l5) / den


def partial_compliance_bound(n: int, p_c: float, sigma_g: float, delta: float) -> float:
    """
    Returns the upper bound on A(S, δ) for `n` racing samples when a fraction
    `p_c` of agents complies; `math.inf` while n is too small for the bound to
    apply.
    """
    check_probability("delta", delta)
    l5 = log(5 / delta)
    den = p_c * sqrt(n) - sqrt(50 * l5)
    return inf if den <= 0 else 8 * sigma_g * sqrt(2 * l5) / den


__all__ = ['BINARY', 'WeakInstrumentError', 'DegenerateError', 'RankDeficientError', 'SampleSet',
           'EstimateWithBound', 'wald_denominator', 'wald_estimate', 'ols_estimate',
           'approximation_bound_binary', 'estimate_binary', 'interaction_matrix', 'iv_estimate_k',
           'approximation_bound_k', 'estimate_k', 'estimate', 'pairwise_bound', 'denominator_lower_bound',
           'full_compliance_bound', 'sampling_stage_bound', 'partial_compliance_bound']

import unittest


def _binary(records: Sequence[tuple[int, int, float]]) -> SampleSet:
    return SampleSet.from_records(records)


def _random_binary(rng: np.random.Generator, n: int, theta: float, noise: float,
                   compliance: float=0.7) -> SampleSet:
    z = rng.integers(0, 2, n)
    preferred = rng.integers(0, 2, n)
    complies = rng.random(n) < compliance
    x = np.where(complies, z, preferred)
    g = 0.8 * preferred + noise * rng.normal(size=n)
    return SampleSet(z, x, theta * x + g)


class TestSampleSet(unittest.TestCase):
    def test_codomain(self) -> None:
        self.assertRaises(ConfigurationError, _binary, [(2, 0, 0.0)])
        self.assertRaises(ConfigurationError, SampleSet.from_records, [(0, 1, 0.0)], 2)
        s = SampleSet.from_records([(1, 2, 0.5), (2, 2, 0.1)], 2)
        self.assertEqual(len(s), 2)
        self.assertEqual(s.records(), [(1, 2, 0.5), (2, 2, 0.1)])

    def test_prefix_concat(self) -> None:
        s = _binary([(1, 1, 1.0), (0, 0, 0.0), (1, 0, 0.5)])
        self.assertEqual(s.prefix(2).records(), [(1, 1, 1.0), (0, 0, 0.0)])
        self.assertEqual(s.prefix(1).concat(s.prefix(1)).records(), [(1, 1, 1.0), (1, 1, 1.0)])


class TestWald(unittest.TestCase):
    def test_noiseless(self) -> None:
        s = _binary([(1, 1, 1.0), (0, 0, 0.0), (1, 1, 1.0), (0, 0, 0.0)])
        self.assertEqual(wald_estimate(s), 1.0)

    def test_hand_example(self) -> None:
        s = _binary([(1, 1, 1.2), (1, 0, 0.1), (0, 0, -0.1), (0, 0, 0.0)])
        self.assertAlmostEqual(wald_estimate(s), 1.4, places=12)

    def test_weak_instrument(self) -> None:
        s = _binary([(1, 1, 1.0), (1, 0, 0.0), (1, 1, 0.3)])
        self.assertRaises(WeakInstrumentError, wald_estimate, s)
        self.assertEqual(approximation_bound_binary(s, 0.05, 1.0), inf)
        est = estimate_binary(s, 0.05, 1.0)
        self.assertFalse(est.is_informative())
        self.assertFalse(abs(est.theta_hat) > est.bound)

    def test_invariances(self) -> None:
        rng = np.random.default_rng(11)
        for _ in range(20):
            s = _random_binary(rng, 50, 0.5, 1.0)
            base_iv = wald_estimate(s)
            base_ols = ols_estimate(s)
            shifted = SampleSet(s.z, s.x, s.y + 3.7)
            self.assertAlmostEqual(wald_estimate(shifted), base_iv, places=9)
            self.assertAlmostEqual(ols_estimate(shifted), base_ols, places=9)
            scaled = SampleSet(s.z, s.x, s.y * -2.5)
            self.assertAlmostEqual(wald_estimate(scaled), -2.5 * base_iv, places=9)
            self.assertAlmostEqual(ols_estimate(scaled), -2.5 * base_ols, places=9)
            flipped = SampleSet(1 - s.z, s.x, s.y)
            self.assertAlmostEqual(wald_estimate(flipped), base_iv, places=9)

    def test_exact_recovery(self) -> None:
        rng = np.random.default_rng(12)
        checked = 0
        while checked < 100:
            n = int(rng.integers(4, 30))
            theta = float(rng.uniform(-1, 1))
            s = _random_binary(rng, n, theta, 0.0)
            # Remove the confounder entirely: g ≡ 0.
            s = SampleSet(s.z, s.x, theta * s.x.astype(np.float64))
            if abs(wald_denominator(s)) < 0.5:
                continue
            self.assertAlmostEqual(wald_estimate(s), theta, delta=1e-12)
            checked += 1


class TestOLS(unittest.TestCase):
    def test_examples(self) -> None:
        s = _binary([(1, 1, 1.0), (0, 1, 1.0), (1, 0, 0.5), (0, 0, 0.5)])
        self.assertAlmostEqual(ols_estimate(s), 0.5, places=12)
        self.assertRaises(DegenerateError, ols_estimate, _binary([(1, 0, 1.0), (0, 0, 0.0)]))

    def test_matches_wald_without_confounding(self) -> None:
        s = _binary([(1, 1, 0.7), (0, 0, 0.0), (1, 1, 0.7), (0, 0, 0.0), (1, 1, 0.7)])
        self.assertAlmostEqual(ols_estimate(s), wald_estimate(s), places=12)


class TestBinaryBound(unittest.TestCase):
    def test_formula(self) -> None:
        # 100 samples with |Σ(x−x̄)(z−z̄)| = 25: full compliance, z̄ = 1/2.
        s = _binary([(i % 2, i % 2, 0.0) for i in range(100)])
        self.assertAlmostEqual(wald_denominator(s), 25.0, places=12)
        self.assertAlmostEqual(approximation_bound_binary(s, 0.05, 1.0), 2 * sqrt(200 * log(40)) / 25, places=12)
        self.assertAlmostEqual(approximation_bound_binary(s, 0.05, 1.0), 2.173, places=3)
        self.assertEqual(approximation_bound_binary(s, 0.05, 0.0), 0.0)

    def test_monotone(self) -> None:
        s = _binary([(i % 2, i % 2, 0.0) for i in range(100)])
        weaker = _binary([(i % 2, 0 if i % 4 == 1 else i % 2, 0.0) for i in range(100)])
        self.assertLess(approximation_bound_binary(s, 0.05, 1.0), approximation_bound_binary(s, 0.05, 2.0))
        self.assertLess(approximation_bound_binary(s, 0.10, 1.0), approximation_bound_binary(s, 0.05, 1.0))
        self.assertLess(abs(wald_denominator(weaker)), abs(wald_denominator(s)))
        self.assertLess(approximation_bound_binary(s, 0.05, 1.0), approximation_bound_binary(weaker, 0.05, 1.0))

    def test_coverage(self) -> None:
        rng = np.random.default_rng(13)
        (runs, delta) = (300, 0.1)
        covered = 0
        for _ in range(runs):
            s = _random_binary(rng, 400, 0.5, 1.0, compliance=1.0)
            covered += estimate_binary(s, delta, 1.0).covers(0.5)
        slack = 3 * sqrt(delta * (1 - delta) / runs)
        self.assertGreaterEqual(covered / runs, 1 - delta - slack)


class TestKArm(unittest.TestCase):
    def test_diagonal(self) -> None:
        s = SampleSet.from_records([(1, 1, 0.2), (2, 2, 0.7)] * 5, 2)
        theta_hat = iv_estimate_k(s)
        self.assertAlmostEqual(theta_hat[0], 0.2, places=12)
        self.assertAlmostEqual(theta_hat[1], 0.7, places=12)

    def test_rank_deficient(self) -> None:
        s = SampleSet.from_records([(1, 1, 0.2), (1, 2, 0.7)] * 5, 2)
        with self.assertRaises(RankDeficientError) as cm:
            iv_estimate_k(s)
        self.assertEqual(cm.exception.uncovered, (2,))
        self.assertEqual(approximation_bound_k(s, 0.05, 1.0), inf)
        self.assertTrue(np.isnan(estimate_k(s, 0.05, 1.0).theta_hat).all())

    def test_bound_formula(self) -> None:
        s = SampleSet.from_records([(1, 1, 0.0), (2, 2, 0.0)] * 50, 2)
        self.assertAlmostEqual(approximation_bound_k(s, 0.05, 1.0), sqrt(400 * log(40)) / 50, places=12)
        self.assertAlmostEqual(approximation_bound_k(s, 0.05, 1.0), 0.768, places=3)
        self.assertEqual(approximation_bound_k(s, 0.05, 0.0), 0.0)

    def test_exact_recovery(self) -> None:
        rng = np.random.default_rng(14)
        checked = 0
        while checked < 100:
            k = int(rng.integers(2, 5))
            n = int(rng.integers(4 * k, 40))
            theta = rng.uniform(-1, 1, k)
            z = rng.integers(1, k + 1, n)
            x = np.where(rng.random(n) < 0.8, z, 1)
            s = SampleSet(z, x, theta[x - 1], k)
            if _smallest_singular_value(interaction_matrix(s)) < 0.5:
                continue
            self.assertTrue(np.allclose(iv_estimate_k(s), theta, rtol=0, atol=1e-12))
            checked += 1

    def test_dense_oracle(self) -> None:
        rng = np.random.default_rng(15)
        checked = 0
        while checked < 100:
            n = 20
            z = rng.integers(1, 3, n)
            x = np.where(rng.random(n) < 0.6, z, rng.integers(1, 3, n))
            y = rng.normal(size=n) + 0.3 * x
            s = SampleSet(z, x, y, 2)
            # Independent oracle: Cramer's rule on explicitly summed entries.
            a = [[sum(1.0 for (zi, xi) in zip(z, x) if zi == r and xi == c) for c in (1, 2)] for r in (1, 2)]
            b = [sum(yi for (zi, yi) in zip(z, y) if zi == r) for r in (1, 2)]
            det = a[0][0] * a[1][1] - a[0][1] * a[1][0]
            if abs(det) < 1.0:
                continue
            oracle = ((b[0] * a[1][1] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - b[0] * a[1][0]) / det)
            theta_hat = iv_estimate_k(s)
            self.assertAlmostEqual(theta_hat[0], oracle[0], delta=1e-9)
            self.assertAlmostEqual(theta_hat[1], oracle[1], delta=1e-9)
            checked += 1

    def test_full_compliance_matches_means(self) -> None:
        rng = np.random.default_rng(16)
        z = rng.integers(1, 3, 200)
        y = rng.normal(size=200) + np.where(z == 1, 0.2, 0.7)
        theta_hat = iv_estimate_k(SampleSet(z, z.copy(), y, 2))
        self.assertAlmostEqual(theta_hat[0], y[z == 1].mean(), delta=1e-9)
        self.assertAlmostEqual(theta_hat[1], y[z == 2].mean(), delta=1e-9)

    def test_restrict(self) -> None:
        s = SampleSet.from_records([(1, 1, 0.1), (2, 2, 0.2), (3, 3, 0.3), (3, 1, 0.4), (2, 3, 0.5)], 3)
        sub = s.restrict((3, 2))
        self.assertEqual(sub.arm_count, 2)
        self.assertEqual(sub.records(), [(2, 2, 0.2), (1, 1, 0.3), (2, 1, 0.5)])
        self.assertEqual(len(s.restrict((1, 2, 3))), 5)
        self.assertRaises(ConfigurationError, s.restrict, (2,))
        self.assertRaises(ConfigurationError, SampleSet.from_records([(0, 1, 0.0)]).restrict, (0, 1))


class TestBoundHelpers(unittest.TestCase):
    def test_pairwise(self) -> None:
        self.assertEqual(pairwise_bound(0.0), 0.0)
        self.assertAlmostEqual(pairwise_bound(1.0), 1.41421356, delta=1e-8)
        self.assertAlmostEqual(pairwise_bound(0.768), 1.0861, places=4)
        self.assertEqual(pairwise_bound(inf), inf)
        self.assertRaises(ConfigurationError, pairwise_bound, -0.1)
        self.assertRaises(ConfigurationError, pairwise_bound, float('nan'))

    def test_denominator_lower_bound(self) -> None:
        self.assertEqual(denominator_lower_bound(100, 0.5, 1.0, 0.05), 25.0)
        self.assertEqual(denominator_lower_bound(400, 0.5, 0.5, 0.05), 0.0)
        self.assertEqual(denominator_lower_bound(100, 0.5, 0.0, 0.05), 0.0)
        expected = 250 - 2.5 * sqrt(2000 * 0.5 * log(30) / 1.0)
        self.assertAlmostEqual(denominator_lower_bound(2000, 0.5, 0.5, 0.1), expected, places=9)

    def test_stage_bounds(self) -> None:
        self.assertAlmostEqual(full_compliance_bound(100, 1.0, 0.05), 8 * sqrt(2 * log(40) / 100), places=12)
        self.assertEqual(sampling_stage_bound(10, 0.01, 0.5, 1.0, 0.05), inf)
        self.assertLess(sampling_stage_bound(10**8, 0.01, 0.5, 1.0, 0.05), inf)
        self.assertEqual(partial_compliance_bound(10, 0.5, 1.0, 0.05), inf)
        self.assertLess(partial_compliance_bound(10**6, 0.5, 1.0, 0.05),
                        partial_compliance_bound(10**5, 0.5, 1.0, 0.05))

    def test_full_compliance_coverage(self) -> None:
        # Alternating recommendations that every agent follows, σ_g = 1.
        rng = np.random.default_rng(19)
        (trials, n, delta) = (200, 400, 0.1)
        z = np.arange(n) % 2
        bound = full_compliance_bound(n, 1.0, delta)
        covered = 0
        for _ in range(trials):
            s = SampleSet(z, z, 0.5 * z + rng.normal(size=n))
            covered += abs(wald_estimate(s) - 0.5) <= bound
        slack = 3 * sqrt(delta * (1 - delta) / trials)
        self.assertGreaterEqual(covered / trials, 1 - delta - slack)
