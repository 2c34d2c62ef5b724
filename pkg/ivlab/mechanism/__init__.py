"""
The planner's recommendation policies and their bookkeeping.

`ivlab.mechanism.binary` implements the two-stage policy for a binary
treatment: a sampling stage that explores against a population that would
otherwise never try the treatment, then a racing stage that alternates
recommendations until the sign of the effect is known. `ivlab.mechanism.karm`
generalizes both stages to k treatments.

This module holds what those share: `PolicyConfig`, the per-round
`TrajectoryLog`, and regret accounting.
"""


from __future__ import annotations
from typing import Optional, Sequence, Union
from dataclasses import dataclass, field
from enum import Enum
from math import inf, isclose

import numpy as np

from ..agents import PopulationSpec
from ..compliance import (DEFAULT_MONTE_CARLO_ITERS, Certificates, XiConfig, certify_racing, default_gap_bound,
                          full_compliance_phase)
from ..errors import IVLabError, ConfigurationError
from ..estimator import BINARY, EstimateWithBound, SampleSet, estimate
from ..util import check_probability


class InsufficientFirstStageError(IVLabError):
    """
    The first stage ended without the control or treatment samples that
    event ξ needs. Enlarging the first stage (smaller ℓ0/ℓ1 relative to the
    population fractions) may help.
    """
    pass


class LengthMode(Enum):
    """How the sampling stage decides its length ℓ."""

    FIXED = "fixed"
    """Run exactly `ell` rounds."""

    EMPIRICAL = "empirical"
    """
    Run blocks of `ell` rounds until A(S, δ) is at most the largest racing
    threshold, or until `ell_cap` rounds.
    """


def _is_integral(value: float) -> bool:
    return isclose(value, round(value), abs_tol=1e-9)


@dataclass(frozen=True)
class PolicyConfig:
    """
    Every parameter of a recommendation policy. For k arms, `rho` is the
    fraction of each exploration phase spent on the arm being explored.
    """
    rho: float
    """Exploration probability."""
    ell: int
    """Sampling-stage length (binary), or samples per arm (k arms)."""
    delta: float
    """Failure probability of the approximation bounds and of the racing stage."""
    horizon: int
    """T, the total number of rounds."""
    ell0: int = 1000
    ell1: int = 1000
    h: int = 50
    """Recommendations per arm per racing phase."""
    tau: float = 0.43
    """Effect magnitude τ the racing compliance thresholds are computed for."""
    xi_delta: Optional[float] = None
    """The δ inside event ξ; defaults to `delta`."""
    g_gap_bound: Optional[float] = None
    """G; defaults to `default_gap_bound` of the population."""
    g_gap_bounds: tuple[float, ...] = ()
    """G^(u) per type, for populations whose types bound the baseline gap differently."""
    sigma_g: float = 1.0
    """Sub-Gaussian norm σ_g assumed by the bounds."""
    arm_count: int = BINARY
    mirrored: bool = False
    """Explore by recommending control to a population of always-takers."""
    checkpoints: tuple[int, ...] = ()
    """Sampling-stage prefix lengths at which the explore count must be exact."""
    ell_mode: LengthMode = LengthMode.FIXED
    ell_cap: Optional[int] = None
    """Largest sampling-stage length in `LengthMode.EMPIRICAL`; defaults to 100·ell."""
    compliant_types: tuple[int, ...] = ()
    """Types that comply throughout, by assumption rather than by certificate."""
    monte_carlo_iters: int = DEFAULT_MONTE_CARLO_ITERS

    def __post_init__(self):
        check_probability("rho", self.rho)
        check_probability("delta", self.delta)
        check_probability("xi delta", self.effective_xi_delta)
        check_probability("tau", self.tau)
        for (name, value) in (("ell", self.ell), ("ell0", self.ell0), ("ell1", self.ell1), ("h", self.h),
                              ("horizon", self.horizon), ("monte_carlo_iters", self.monte_carlo_iters)):
            if value < 1:
                raise ConfigurationError(f"{name} must be at least 1, got {value!r}")
        if self.arm_count != BINARY and self.arm_count < 2:
            raise ConfigurationError(f"arm_count must be 1 (binary) or at least 2, got {self.arm_count}")
        if self.arm_count == BINARY:
            if not _is_integral(self.rho * self.ell):
                raise ConfigurationError(f"rho·ell must be a whole number, got {self.rho * self.ell!r}")
        elif not _is_integral(self.ell / self.rho):
            raise ConfigurationError(f"ell/rho must be a whole number, got {self.ell / self.rho!r}")
        if list(self.checkpoints) != sorted(set(self.checkpoints)):
            raise ConfigurationError("checkpoints must be strictly increasing")
        for c in self.checkpoints:
            if not (0 < c <= self.ell) or not _is_integral(self.rho * c):
                raise ConfigurationError(f"checkpoint {c} must lie in 1..ell with rho·{c} a whole number")
        if self.ell_cap is not None and self.ell_cap < self.ell:
            raise ConfigurationError(f"ell_cap must be at least ell, got {self.ell_cap}")

    @property
    def effective_xi_delta(self) -> float:
        return self.delta if self.xi_delta is None else self.xi_delta

    @property
    def effective_ell_cap(self) -> int:
        return 100 * self.ell if self.ell_cap is None else self.ell_cap

    @property
    def explore_count(self) -> int:
        """ρℓ, the number of explore rounds per ℓ sampling-stage rounds."""
        return round(self.rho * self.ell)

    @property
    def phase_length(self) -> int:
        """ℓ/ρ, the length of one k-arm exploration phase."""
        return round(self.ell / self.rho)

    def xi_config(self, pop: PopulationSpec) -> XiConfig:
        """The published first-stage parameters for `pop`."""
        gap = default_gap_bound(pop, self.mirrored) if self.g_gap_bound is None else self.g_gap_bound
        xi_cfg = XiConfig(self.ell0, self.ell1, self.effective_xi_delta, gap, self.sigma_g, self.g_gap_bounds)
        xi_cfg.check_types(len(pop.types))
        return xi_cfg

    def forced_certificates(self, pop: PopulationSpec) -> Certificates:
        for u in self.compliant_types:
            if not (0 <= u < len(pop.types)):
                raise ConfigurationError(f"compliant type {u} is not in the population")
        return Certificates.forced(len(pop.types), self.compliant_types)


class Stage(Enum):
    """Which part of a policy a round belongs to."""

    FIRST = "first"
    """Before any exploration: no recommendation, or the universally preferred arm."""

    SAMPLING = "sampling"
    """Exploration at probability ρ."""

    RACING = "racing"
    """Alternating recommendations until a winner is known."""

    EXPLOIT = "exploit"
    """Recommending the declared winner."""

    TRIAL = "trial"
    """Fair-coin recommendations."""


@dataclass(frozen=True)
class RoundRecord:
    """What happened in one round."""
    t: int
    stage: Stage
    phase: int
    type_index: int
    z: Optional[int]
    """The recommendation, or None if none was issued."""
    x: int
    y: float
    explore: bool = False

    @property
    def complied(self) -> bool:
        return self.z is not None and self.x == self.z


@dataclass(frozen=True)
class Flip:
    """A type's certificate turning on."""
    t: int
    type_index: int
    reason: str
    phase: int


class TrajectoryLog:
    """
    The history of one policy run: every round, the stage boundaries, the
    racing bounds, certificate flips and the declared winner.
    """

    def __init__(self, arm_count: int=BINARY):
        self.arm_count = arm_count
        self.records: list[RoundRecord] = []
        self.boundaries: list[tuple[int, Stage]] = []
        """(first round, stage) for each stage entered."""
        self.bounds: list[float] = []
        """A_q, the bound of the best racing sample set after phase q (index 0 is S₀)."""
        self.best: list[int] = []
        """The phase r whose sample set S_r is S_q^BEST."""
        self.active_sets: list[tuple[int, ...]] = []
        """The k-arm active set B at the start of each racing phase."""
        self.flips: list[Flip] = []
        self.a_star: list[int] = []
        """Exploit recommendations of the sampling stage (one per explored arm for k arms)."""
        self.winner: Optional[int] = None
        self.stop_round: Optional[int] = None

    def append(self, record: RoundRecord) -> None:
        assert record.t == len(self.records)
        self.records.append(record)

    def mark(self, t: int, stage: Stage) -> None:
        """Records that `stage` begins at round `t`."""
        self.boundaries.append((t, stage))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def undecided(self) -> bool:
        """Did the run end without declaring a winner?"""
        return self.winner is None

    def stage_records(self, *stages: Stage) -> list[RoundRecord]:
        return [r for r in self.records if r.stage in stages]

    def samples(self, start: int=0, end: Optional[int]=None, stages: Sequence[Stage]=()) -> SampleSet:
        """
        Returns the (z, x, y) observations of the recommended rounds in
        `records[start:end]`, optionally restricted to `stages`.
        """
        rows = [(r.z, r.x, r.y) for r in self.records[start:end]
                if r.z is not None and (not stages or r.stage in stages)]
        return SampleSet.from_records(rows, self.arm_count)

    def actions(self) -> np.ndarray:
        return np.fromiter((r.x for r in self.records), dtype=np.int64, count=len(self.records))


@dataclass(frozen=True)
class RegretReport:
    """Pseudo-regret of one run against the true effect."""
    total: float
    per_type: dict[int, float]
    cumulative: np.ndarray = field(repr=False)
    """Pseudo-regret after each round."""
    post_sampling: float
    """Regret accumulated in the racing and exploit stages."""


def _losses(log: TrajectoryLog, theta: Union[float, Sequence[float]]) -> np.ndarray:
    x = log.actions()
    if np.ndim(theta) == 0:
        return max(float(theta), 0.0) - float(theta) * x
    effects = np.asarray(theta, dtype=np.float64)
    return effects.max() - effects[x - 1]


def pseudo_regret(log: TrajectoryLog, theta: Union[float, Sequence[float]]) -> RegretReport:
    """
    Returns T·max(θ, 0) − Σθ·x_t for a binary run, or T·max_i θⁱ − Σθ^{x_t}
    for a k-arm run, split by type and by stage.
    """
    losses = _losses(log, theta)
    types = np.fromiter((r.type_index for r in log.records), dtype=np.int64, count=len(log))
    late = np.fromiter((r.stage in (Stage.RACING, Stage.EXPLOIT) for r in log.records), dtype=bool,
                       count=len(log))
    per_type = {int(u): float(losses[types == u].sum()) for u in np.unique(types)}
    return RegretReport(float(losses.sum()), per_type, np.cumsum(losses), float(losses[late].sum()))


def race_estimate(s: SampleSet, cfg: PolicyConfig) -> EstimateWithBound:
    """The racing-stage estimate of `s`; uninformative when `s` is empty."""
    if len(s) == 0:
        return EstimateWithBound(float('nan') if s.is_binary() else np.full(s.arm_count, np.nan), inf,
                                 cfg.delta, 0.0)
    return estimate(s, cfg.delta, cfg.sigma_g)


def racing_certificates(pop: PopulationSpec, cfg: PolicyConfig, current: Certificates, bound: float,
                        phase: int, thresholds: Sequence[float]) -> Certificates:
    """
    Re-evaluates racing-stage compliance after `phase`: a type is certified
    once `bound` is within its threshold ("bound"), or once `phase` reaches
    the phase after which the already compliant fraction guarantees it
    ("phase"). Certificates never turn off.
    """
    certs = current.merge(certify_racing(pop, bound, cfg.tau, thresholds))
    p_c = certs.compliant_fraction(pop.fractions)
    if p_c <= 0 or phase < 1:
        return certs
    for (u, threshold) in enumerate(thresholds):
        if certs.holds(u) or threshold <= 0:
            continue
        if phase >= full_compliance_phase(4 * threshold, min(p_c, 1.0), cfg.h, cfg.sigma_g, cfg.delta):
            certs = certs.certify(u, "phase")
    return certs


__all__ = ['InsufficientFirstStageError', 'LengthMode', 'PolicyConfig', 'Stage', 'RoundRecord', 'Flip',
           'TrajectoryLog', 'RegretReport', 'pseudo_regret', 'race_estimate', 'racing_certificates']

import unittest

from ..stats import Streams


def _log(actions: Sequence[int], stage: Stage=Stage.RACING, types: Optional[Sequence[int]]=None,
         arm_count: int=BINARY) -> TrajectoryLog:
    log = TrajectoryLog(arm_count)
    for (t, x) in enumerate(actions):
        u = 0 if types is None else types[t]
        log.append(RoundRecord(t, stage, 1, u, x, x, 0.0))
    return log


class TestPolicyConfig(unittest.TestCase):
    def test_valid(self) -> None:
        cfg = PolicyConfig(rho=0.001, ell=100000, delta=0.05, horizon=200000, checkpoints=(1000, 3000, 10000))
        self.assertEqual(cfg.explore_count, 100)
        self.assertEqual(cfg.effective_xi_delta, 0.05)
        self.assertEqual(PolicyConfig(rho=0.25, ell=10, delta=0.1, horizon=10, arm_count=3).phase_length, 40)

    def test_invalid(self) -> None:
        self.assertRaises(ConfigurationError, PolicyConfig, rho=0.001, ell=1500, delta=0.05, horizon=10)
        self.assertRaises(ConfigurationError, PolicyConfig, rho=0.0, ell=1000, delta=0.05, horizon=10)
        self.assertRaises(ConfigurationError, PolicyConfig, rho=0.3, ell=10, delta=0.1, horizon=10, arm_count=3)
        self.assertRaises(ConfigurationError, PolicyConfig, rho=0.001, ell=10000, delta=0.05, horizon=10,
                          checkpoints=(3000, 1000))
        self.assertRaises(ConfigurationError, PolicyConfig, rho=0.001, ell=10000, delta=0.05, horizon=10,
                          checkpoints=(1500,))
        self.assertRaises(ConfigurationError, PolicyConfig, rho=0.1, ell=10, delta=0.1, horizon=10, h=0)


class TestTrajectoryLog(unittest.TestCase):
    def test_samples(self) -> None:
        log = TrajectoryLog()
        log.append(RoundRecord(0, Stage.FIRST, 0, 0, None, 0, 0.1))
        log.append(RoundRecord(1, Stage.SAMPLING, 0, 1, 1, 1, 0.7, explore=True))
        log.append(RoundRecord(2, Stage.SAMPLING, 0, 0, 0, 1, 0.4))
        s = log.samples()
        self.assertEqual(s.records(), [(1, 1, 0.7), (0, 1, 0.4)])
        self.assertEqual(len(log.samples(stages=(Stage.RACING,))), 0)
        self.assertEqual([r.complied for r in log.records], [False, True, False])
        self.assertTrue(log.undecided)


class TestPseudoRegret(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertEqual(pseudo_regret(_log([1, 0, 1, 1]), 0.5).total, 0.5)
        self.assertEqual(pseudo_regret(_log([0, 0, 0]), -0.5).total, 0.0)
        self.assertEqual(pseudo_regret(_log([1, 1]), -0.5).total, 1.0)
        report = pseudo_regret(_log([1, 2, 3], arm_count=3), (0.1, 0.2, 0.3))
        self.assertAlmostEqual(report.total, 0.3, places=12)

    def test_split(self) -> None:
        log = _log([1, 0, 0, 1], types=[0, 1, 0, 1])
        report = pseudo_regret(log, 0.5)
        self.assertEqual(report.per_type, {0: 0.5, 1: 0.5})
        self.assertEqual(list(report.cumulative), [0.0, 0.5, 1.0, 1.0])
        self.assertEqual(report.post_sampling, 1.0)
        self.assertEqual(pseudo_regret(_log([0, 0], stage=Stage.SAMPLING), 0.5).post_sampling, 0.0)

    def test_summation_oracle(self) -> None:
        rng = Streams(21).stream('planner')
        actions = rng.integers(0, 2, 1000)
        types = rng.integers(0, 3, 1000)
        theta = 0.37
        report = pseudo_regret(_log(list(actions), types=list(types)), theta)
        total = 0.0
        for x in actions:
            total += theta - theta * int(x)
        self.assertAlmostEqual(report.total, total, delta=1e-12)
        self.assertAlmostEqual(sum(report.per_type.values()), total, delta=1e-9)
