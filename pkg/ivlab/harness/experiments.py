"""
The experiment presets.

* `fig1`: IV versus OLS error of the sampling-stage samples as the stage
  grows, against a population of skeptics and believers.
* `racing_fig`: the same errors, and the approximation bound, phase by phase
  through the racing stage, on a low-noise population whose types are all
  certified from the data.
* `rho_table_gap`, `rho_table_variance`: P[ξ] and the exploration ceiling as
  the expected baseline gap, or the variance of the skeptics' prior, varies.
* `coverage`: how often A(S, δ) covers the error of a fully compliant trial.
* `regret_scaling`: post-sampling regret of the combined policy as the
  horizon quadruples, with the effect shrinking like 1/√T, next to the same
  runs with the effect held fixed.
* `karm_demo`: the same comparison for the three-arm combined policy.
"""


from __future__ import annotations
from typing import Any, Optional, Sequence
from dataclasses import dataclass, replace
from math import inf, sqrt

import numpy as np

from ..agents import PopulationSpec, TypeSpec
from ..compliance import (PriorSpec, certify_racing, estimate_xi_probability, exploration_probability_bound,
                          full_compliance_phase, racing_thresholds)
from ..errors import IVLabError, ConfigurationError
from ..estimator import SampleSet, estimate_binary, ols_estimate, wald_denominator, wald_estimate
from ..mechanism import LengthMode, PolicyConfig, RegretReport, Stage, TrajectoryLog
from ..mechanism.binary import run_combined_policy, run_racing_stage, run_randomized_trial, run_sampling_stage
from ..mechanism.karm import run_combined_policy_k
from ..stats import GaussianBaseline, Streams, TruncatedGaussian
from . import ExperimentPreset, ResultTable, Theta, config_hash, summarize


def two_type_population(gap: float=0.1, skeptic_std: float=1.0) -> PopulationSpec:
    """
    Skeptics (prior N(−0.5, `skeptic_std`²) on θ) and believers (prior
    N(0.9, 1)) in equal shares, both truncated to [−1, 1]. Run-level
    baseline means are N(0, 1) for skeptics and N(`gap`, 1) for believers.
    """
    return PopulationSpec((
        TypeSpec(PriorSpec(TruncatedGaussian(-0.5, skeptic_std), GaussianBaseline(0.0, 1.0, 1.0)), 0.5),
        TypeSpec(PriorSpec(TruncatedGaussian(0.9, 1.0), GaussianBaseline(gap, 1.0, 1.0)), 0.5),
    ))


def quiet_two_type_population(gap: float=0.01, noise_std: float=0.01) -> PopulationSpec:
    """
    The priors of `two_type_population` with a fixed, low-noise baseline:
    mean 0 for skeptics and `gap` for believers, per-round noise
    `noise_std`. Derived compliance certificates come within reach of a few
    thousand sampling rounds.
    """
    (skeptic, believer) = two_type_population().types
    return PopulationSpec((
        replace(skeptic, prior=replace(skeptic.prior, baseline=GaussianBaseline(0.0, 0.0, noise_std))),
        replace(believer, prior=replace(believer.prior, baseline=GaussianBaseline(gap, 0.0, noise_std))),
    ))


def three_arm_population() -> PopulationSpec:
    """
    Two types ranking three nearly equal arms the same way, with baselines
    0.02 apart.
    """
    def prior(hyper_mean: float) -> PriorSpec:
        return PriorSpec(arm_priors=tuple(TruncatedGaussian(m, 2.0) for m in (1.0, 0.998, 0.996)),
                         baseline=GaussianBaseline(hyper_mean, 0.0, 0.02))

    return PopulationSpec((TypeSpec(prior(0.0), 0.6), TypeSpec(prior(0.02), 0.4)))


def _safe(estimator: Any, s: SampleSet) -> float:
    try:
        return float(estimator(s))
    except IVLabError:
        return float('nan')


def _errors(s: SampleSet, theta: float) -> tuple[float, float]:
    return (abs(_safe(wald_estimate, s) - theta), abs(_safe(ols_estimate, s) - theta))


def realized_confounding_gap(s: SampleSet, theta: float) -> float:
    """|mean baseline of treated samples − mean baseline of control samples|."""
    g = s.y - theta * s.x
    treated = s.x == 1
    if treated.all() or not treated.any():
        return float('nan')
    return abs(float(g[treated].mean() - g[~treated].mean()))


def fig1_trial(preset: ExperimentPreset, seed: int) -> list[tuple[float, float, float, float]]:
    """Per checkpoint ℓ: (ℓ, IV error, OLS error, realized confounding gap) of the first ℓ samples."""
    cfg = preset.policy
    theta = float(preset.theta)  # type: ignore[arg-type]
    (samples, _) = run_sampling_stage(cfg, preset.population, theta, Streams(seed), preset.behavior_model())
    cuts = cfg.checkpoints if cfg.ell in cfg.checkpoints else cfg.checkpoints + (cfg.ell,)
    rows = []
    for c in cuts:
        prefix = samples.prefix(c)
        rows.append((float(c),) + _errors(prefix, theta) + (realized_confounding_gap(prefix, theta),))
    return rows


def _by_position(trials: list[list[tuple[float, ...]]], length: int) -> list[tuple[float, ...]]:
    rows = []
    for i in range(length):
        row = [trials[0][i][0]]
        for j in range(1, len(trials[0][i])):
            row.extend(summarize([t[i][j] for t in trials]))
        rows.append(tuple(row))
    return rows


def reduce_by_position(preset: ExperimentPreset, trials: list[list[tuple[float, ...]]]) -> list[tuple[float, ...]]:
    """Averages the trials row by row over the rows every trial has."""
    return _by_position(trials, min(len(t) for t in trials))


@dataclass(frozen=True)
class RacingTrial:
    rows: list[tuple[float, float, float, float]]
    """Per racing phase q: (racing rounds so far, IV error, OLS error, A_q)."""
    winner: Optional[int]
    stop_round: Optional[int]
    flips_within_limit: bool
    """Did every certified flip happen no later than the guaranteed phase?"""


def flip_limits(pop: PopulationSpec, cfg: PolicyConfig, initial_bound: float) -> list[float]:
    """
    The racing phase by which each type is guaranteed to comply, given the
    types certified when the race opens with bound `initial_bound`.
    """
    opening = certify_racing(pop, initial_bound, cfg.tau).merge(cfg.forced_certificates(pop))
    p_c = opening.compliant_fraction(pop.fractions)
    limits = []
    for threshold in racing_thresholds(pop, cfg.tau):
        if threshold <= 0 or p_c <= 0:
            limits.append(inf)
        else:
            limits.append(full_compliance_phase(4 * threshold, min(p_c, 1.0), cfg.h, cfg.sigma_g, cfg.delta))
    return limits


def _racing_start(log: TrajectoryLog) -> int:
    return next(t for (t, stage) in log.boundaries if stage is Stage.RACING)


def racing_trial(preset: ExperimentPreset, seed: int) -> RacingTrial:
    cfg = preset.policy
    pop = preset.population
    theta = float(preset.theta)  # type: ignore[arg-type]
    (log, _) = run_combined_policy(cfg, pop, theta, Streams(seed), preset.behavior_model())
    start = _racing_start(log)
    ends = {}
    for (i, r) in enumerate(log.records[start:], start):
        if r.stage is Stage.RACING:
            ends[r.phase] = i + 1
    stages = (Stage.SAMPLING, Stage.RACING)
    rows = []
    for (q, bound) in enumerate(log.bounds):
        end = ends.get(q, start)
        (iv, ols) = _errors(log.samples(0, end, stages), theta)
        rows.append((float(end - start), iv, ols, bound))
    limits = flip_limits(pop, cfg, log.bounds[0])
    ok = all(f.phase <= limits[f.type_index] for f in log.flips if f.reason in ("bound", "phase"))
    return RacingTrial(rows, log.winner, log.stop_round, ok)


def reduce_racing(preset: ExperimentPreset, trials: list[RacingTrial]) -> list[tuple[float, ...]]:
    rows = [t.rows for t in trials]
    return _by_position(rows, min(len(r) for r in rows))  # type: ignore[arg-type]


def rho_table(points: Sequence[tuple[float, PopulationSpec]], policy: PolicyConfig, iters: int, seed: int,
              name: str="rho_table", x_label: str="x") -> ResultTable:
    """
    One row per grid point: (value, P̂[ξ], its standard error, ρ ceiling) for
    the first never-taker type of that point's population. Every point draws
    from the same random numbers.
    """
    if not points:
        raise ConfigurationError("rho_table needs at least one grid point")
    rows = []
    for (value, pop) in points:
        never = pop.never_takers()
        if not never:
            raise ConfigurationError(f"grid point {value!r} has no never-takers")
        u = never[0]
        rng = Streams(seed).stream('monte_carlo')
        p_xi = estimate_xi_probability(pop, policy.xi_config(pop).running(), iters, rng, type_index=u)
        ceiling = exploration_probability_bound(pop.types[u].prior.prior_mean_theta, p_xi.value)
        rows.append((float(value), p_xi.value, p_xi.std_error, ceiling))
    return ResultTable(name, (x_label, "p_xi", "p_xi_se", "rho_ceiling"), tuple(rows), (seed,),
                       config_hash({'grid': [p[0] for p in points], 'iters': iters}))


def _with_gap(pop: PopulationSpec, gap: float) -> PopulationSpec:
    (skeptic, believer) = pop.types
    prior = replace(believer.prior, baseline=replace(believer.prior.baseline, hyper_mean=gap))
    return replace(pop, types=(skeptic, replace(believer, prior=prior)))


def _with_skeptic_variance(pop: PopulationSpec, variance: float) -> PopulationSpec:
    (skeptic, believer) = pop.types
    assert skeptic.prior.theta_prior is not None
    prior = replace(skeptic.prior, theta_prior=replace(skeptic.prior.theta_prior, std_dev=sqrt(variance)))
    return replace(pop, types=(replace(skeptic, prior=prior), believer))


def rho_gap_trial(preset: ExperimentPreset, seed: int) -> list[tuple[float, ...]]:
    points = [(g, _with_gap(preset.population, g)) for g in preset.grid]
    return list(rho_table(points, preset.policy, preset.iters, seed, preset.name, "gap").rows)


def rho_variance_trial(preset: ExperimentPreset, seed: int) -> list[tuple[float, ...]]:
    points = [(v, _with_skeptic_variance(preset.population, v)) for v in preset.grid]
    return list(rho_table(points, preset.policy, preset.iters, seed, preset.name, "variance").rows)


def reduce_first(preset: ExperimentPreset, trials: list[list[tuple[float, ...]]]) -> list[tuple[float, ...]]:
    """Monte Carlo tables carry their own standard errors; only the first seed is reported."""
    return trials[0]


def coverage_trial(preset: ExperimentPreset, seed: int) -> tuple[float, float, float]:
    """(covered, |θ̂ − θ|, A(S, δ)) for one fully compliant fair-coin trial."""
    cfg = preset.policy
    theta = float(preset.theta)  # type: ignore[arg-type]
    (samples, _) = run_randomized_trial(preset.n, preset.population, theta, Streams(seed),
                                        behavior=preset.behavior_model())
    est = estimate_binary(samples, cfg.delta, cfg.sigma_g)
    return (float(est.covers(theta)), est.error(theta), est.bound)


def reduce_coverage(preset: ExperimentPreset, trials: list[tuple[float, float, float]]) -> list[tuple[float, ...]]:
    row = [float(preset.n)]
    for j in range(3):
        row.extend(summarize([t[j] for t in trials]))
    return [tuple(row)]


def scaled_theta(preset: ExperimentPreset, horizon: float) -> Theta:
    """
    The effect for `horizon`: `preset.theta` at the first grid horizon, its
    gaps shrinking like 1/√T. For k arms each arm keeps its distance to the
    best arm in proportion.
    """
    scale = sqrt(preset.grid[0] / horizon)
    if np.ndim(preset.theta) == 0:
        return float(preset.theta) * scale  # type: ignore[arg-type]
    effects = tuple(float(e) for e in preset.theta)  # type: ignore[union-attr]
    best = max(effects)
    return tuple(best - scale * (best - e) for e in effects)


def _regret(preset: ExperimentPreset, horizon: float, theta: Theta, seed: int) -> RegretReport:
    cfg = replace(preset.policy, horizon=int(horizon))
    if np.ndim(theta) == 0:
        (_, report) = run_combined_policy(cfg, preset.population, float(theta), Streams(seed),  # type: ignore[arg-type]
                                          preset.behavior_model())
    else:
        (_, report) = run_combined_policy_k(cfg, preset.population, theta, Streams(seed),  # type: ignore[arg-type]
                                            preset.behavior_model())
    return report


def regret_trial(preset: ExperimentPreset, seed: int) -> list[tuple[float, float, float, float]]:
    """
    Per horizon T: (T, post-sampling regret, total regret, post-sampling
    regret with the effect held at `preset.theta`).
    """
    rows = []
    for horizon in preset.grid:
        scaled = _regret(preset, horizon, scaled_theta(preset, horizon), seed)
        fixed = scaled if horizon == preset.grid[0] else _regret(preset, horizon, preset.theta, seed)
        rows.append((float(horizon), scaled.post_sampling, scaled.total, fixed.post_sampling))
    return rows


REGRET_COLUMNS = ("horizon", "post_sampling_mean", "post_sampling_se", "total_mean", "total_se", "fixed_mean",
                  "fixed_se")

FIG1_POLICY = PolicyConfig(rho=0.001, ell=100_000, delta=0.05, xi_delta=1e-4, horizon=104_000, ell0=1000, ell1=1000,
                           checkpoints=(1000, 3000, 10_000, 30_000), monte_carlo_iters=10_000)

RACING_POLICY = PolicyConfig(rho=0.15, ell=1000, delta=0.05, xi_delta=0.01, horizon=20_000, ell0=100, ell1=100,
                             h=50, tau=0.43, sigma_g=0.015, ell_mode=LengthMode.EMPIRICAL, ell_cap=20_000,
                             monte_carlo_iters=10_000)
"""
Certifies every type from the data on `quiet_two_type_population`: skeptics
through ρ during sampling and through the bound once the race opens,
believers a phase later.
"""

KARM_POLICY = PolicyConfig(rho=0.25, ell=600, delta=0.05, horizon=30_000, arm_count=3, sigma_g=0.03, h=50, tau=0.3,
                           monte_carlo_iters=10_000)

PRESETS: dict[str, ExperimentPreset] = {p.name: p for p in (
    ExperimentPreset("fig1", "IV versus OLS error through the sampling stage", two_type_population(), FIG1_POLICY,
                     0.5, 5, fig1_trial, reduce_by_position,
                     ("ell", "iv_mean", "iv_se", "ols_mean", "ols_se", "gap_mean", "gap_se")),
    ExperimentPreset("racing_fig", "IV versus OLS error and the bound through the racing stage",
                     quiet_two_type_population(), RACING_POLICY, 0.006, 5, racing_trial, reduce_racing,
                     ("racing_rounds", "iv_mean", "iv_se", "ols_mean", "ols_se", "bound_mean", "bound_se"),
                     log_y=True),
    ExperimentPreset("rho_table_gap", "exploration ceiling against the expected baseline gap", two_type_population(),
                     FIG1_POLICY, 0.5, 1, rho_gap_trial, reduce_first, ("gap", "p_xi", "p_xi_se", "rho_ceiling"),
                     grid=(-0.5, -0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4, 0.5), iters=1000),
    ExperimentPreset("rho_table_variance", "exploration ceiling against the skeptics' prior variance",
                     two_type_population(), FIG1_POLICY, 0.5, 1, rho_variance_trial, reduce_first,
                     ("variance", "p_xi", "p_xi_se", "rho_ceiling"),
                     grid=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0), iters=10_000),
    ExperimentPreset("coverage", "coverage of A(S, delta) in fully compliant trials", two_type_population(),
                     PolicyConfig(rho=0.5, ell=2, delta=0.1, horizon=1000, sigma_g=1.0), 0.5, 200, coverage_trial,
                     reduce_coverage, ("n", "covered_mean", "covered_se", "error_mean", "error_se", "bound_mean",
                                       "bound_se"), n=1000),
    ExperimentPreset("regret_scaling", "post-sampling regret as the horizon quadruples", quiet_two_type_population(),
                     replace(RACING_POLICY, horizon=15_000), 0.005, 10, regret_trial, reduce_by_position,
                     REGRET_COLUMNS, grid=(15_000, 60_000, 240_000)),
    ExperimentPreset("karm_demo", "post-sampling regret of the three-arm policy as the horizon quadruples",
                     three_arm_population(), KARM_POLICY, (0.30, 0.31, 0.29), 5, regret_trial, reduce_by_position,
                     REGRET_COLUMNS, grid=(30_000, 120_000)),
)}


def denominator_trial(seed: int, n: int=2000, delta: float=0.1, theta: float=0.1) -> tuple[float, int]:
    """
    Runs `n` racing rounds from no prior samples, with the skeptics (half the
    population) forced to comply, and returns |Σ(x−x̄)(z−z̄)| and the number
    of samples.
    """
    cfg = PolicyConfig(rho=0.5, ell=2, delta=delta, horizon=n, h=50, compliant_types=(0,))
    (log, _, _) = run_racing_stage(SampleSet.from_records([]), cfg, two_type_population(), theta, Streams(seed))
    samples = log.samples(stages=(Stage.RACING,))
    return (abs(wald_denominator(samples)), len(samples))


__all__ = ['two_type_population', 'quiet_two_type_population', 'three_arm_population', 'realized_confounding_gap',
           'fig1_trial', 'reduce_by_position', 'RacingTrial', 'flip_limits', 'racing_trial', 'reduce_racing',
           'rho_table', 'rho_gap_trial', 'rho_variance_trial', 'reduce_first', 'coverage_trial', 'reduce_coverage',
           'scaled_theta', 'regret_trial', 'REGRET_COLUMNS', 'FIG1_POLICY', 'RACING_POLICY', 'KARM_POLICY', 'PRESETS',
           'denominator_trial']

import unittest
from pathlib import Path
from tempfile import TemporaryDirectory

from ..estimator import denominator_lower_bound
from . import emit_result_table, run_preset, run_trials, seed_list


class TestFig1(unittest.TestCase):
    def test_iv_beats_ols(self) -> None:
        preset = PRESETS['fig1']
        (table, trials) = run_preset(preset, seed_list(0, preset.seed_count))
        iv = table.column("iv_mean")
        ols = table.column("ols_mean")
        self.assertEqual(list(table.column("ell")), [1000.0, 3000.0, 10_000.0, 30_000.0, 100_000.0])
        self.assertLess(iv[-1], iv[0])
        self.assertLess(iv[-1], ols[-1])
        for rows in trials:
            (_, _, ols_error, gap) = rows[-1]
            self.assertLess(abs(ols_error - gap), 0.05)


class TestRacing(unittest.TestCase):
    def test_winner(self) -> None:
        preset = replace(PRESETS['racing_fig'], policy=replace(RACING_POLICY, horizon=16_000))
        trials = run_trials(preset, seed_list(100, 100))
        self.assertGreaterEqual(sum(t.winner == 1 for t in trials), 95)
        self.assertTrue(all(t.flips_within_limit for t in trials))
        for t in trials:
            bounds = [r[3] for r in t.rows]
            self.assertTrue(all(a >= b for (a, b) in zip(bounds, bounds[1:])))

    def test_derived_certificates(self) -> None:
        preset = PRESETS['racing_fig']
        self.assertEqual(preset.policy.compliant_types, ())
        (log, _) = run_combined_policy(preset.policy, preset.population, 0.006, Streams(7))
        flips = {(f.type_index, f.reason) for f in log.flips}
        self.assertIn((0, "rho"), flips)
        self.assertIn((0, "bound"), flips)
        self.assertIn((1, "phase"), flips)
        start = _racing_start(log)
        self.assertLessEqual(log.bounds[0], racing_thresholds(preset.population, preset.policy.tau)[0])
        self.assertTrue(all(r.complied for r in log.records[start:] if r.stage is Stage.RACING and r.phase >= 2))

    def test_table(self) -> None:
        preset = replace(PRESETS['racing_fig'], policy=replace(RACING_POLICY, horizon=8000))
        (table, _) = run_preset(preset, seed_list(0, 2))
        self.assertTrue(table.log_y)
        self.assertEqual(table.rows[0][0], 0.0)
        self.assertTrue(np.all(np.diff(table.column("racing_rounds")) > 0))

    def test_denominator_bound(self) -> None:
        held = 0
        for seed in range(200):
            (empirical, n) = denominator_trial(seed)
            self.assertEqual(n, 2000)
            held += empirical >= denominator_lower_bound(n, 0.5, 0.5, 0.1)
        self.assertGreaterEqual(held, 170)


class TestRhoTable(unittest.TestCase):
    def test_gap_band(self) -> None:
        preset = PRESETS['rho_table_gap']
        (table, _) = run_preset(preset, (0,))
        self.assertEqual(len(table.rows), 10)
        for rho in table.column("rho_ceiling"):
            self.assertGreaterEqual(rho, 5e-4)
            self.assertLessEqual(rho, 2e-2)

    def test_single_point(self) -> None:
        table = rho_table([(0.1, two_type_population(0.1))], FIG1_POLICY, 200, 0)
        self.assertEqual(len(table.rows), 1)

    def test_empty_grid(self) -> None:
        self.assertRaises(ConfigurationError, rho_table, [], FIG1_POLICY, 200, 0)

    def test_variance_grid(self) -> None:
        preset = replace(PRESETS['rho_table_variance'], grid=(0.5, 1.0), iters=2000)
        (table, _) = run_preset(preset, (0,))
        self.assertEqual(list(table.column("variance")), [0.5, 1.0])
        self.assertTrue(all(0 <= p <= 1 for p in table.column("p_xi")))


class TestCoverage(unittest.TestCase):
    def test_coverage(self) -> None:
        preset = PRESETS['coverage']
        (table, trials) = run_preset(preset, seed_list(0, 200))
        self.assertEqual(len(table.rows), 1)
        self.assertGreaterEqual(sum(t[0] for t in trials), 0.85 * 200)

    def test_same_seeds_same_bytes(self) -> None:
        preset = replace(PRESETS['coverage'], n=200)
        with TemporaryDirectory() as first, TemporaryDirectory() as second:
            (a, _) = emit_result_table(run_preset(preset, seed_list(0, 20))[0], Path(first))
            (b, _) = emit_result_table(run_preset(preset, seed_list(0, 20), jobs=2)[0], Path(second))
            self.assertEqual(a.read_bytes(), b.read_bytes())


class TestRegretScaling(unittest.TestCase):
    def test_ratio(self) -> None:
        preset = PRESETS['regret_scaling']
        (table, _) = run_preset(preset, seed_list(0, 3))
        self.assertEqual(table.columns, REGRET_COLUMNS)
        scaled = table.column("post_sampling_mean")
        fixed = table.column("fixed_mean")
        self.assertEqual(scaled[0], fixed[0])
        for (small, large) in zip(scaled, scaled[1:]):
            self.assertGreater(small, 0)
            self.assertGreaterEqual(large / small, 1.5)
            self.assertLessEqual(large / small, 3.0)
        # Held fixed, the effect is found as fast at every horizon.
        self.assertLess(fixed[-1] / fixed[0], 1.5)

    def test_scaled_theta(self) -> None:
        preset = PRESETS['regret_scaling']
        self.assertAlmostEqual(float(scaled_theta(preset, 60_000)), 0.0025)  # type: ignore[arg-type]
        arms = scaled_theta(PRESETS['karm_demo'], 120_000)
        self.assertEqual(len(arms), 3)  # type: ignore[arg-type]
        for (got, want) in zip(arms, (0.31 - 0.005, 0.31, 0.31 - 0.01)):  # type: ignore[arg-type]
            self.assertAlmostEqual(got, want)


class TestKArmDemo(unittest.TestCase):
    def test_derived_certificates(self) -> None:
        preset = replace(PRESETS['karm_demo'], policy=replace(KARM_POLICY, horizon=6000))
        self.assertEqual(preset.policy.compliant_types, ())
        (log, _) = run_combined_policy_k(preset.policy, preset.population, preset.theta, Streams(3))
        flips = {(f.type_index, f.reason) for f in log.flips}
        self.assertIn((0, "rho"), flips)
        self.assertIn((1, "rho"), flips)
        self.assertTrue(all(r.complied for r in log.records if r.stage is Stage.RACING))

    def test_ratio(self) -> None:
        preset = PRESETS['karm_demo']
        (table, _) = run_preset(preset, seed_list(0, 4))
        scaled = table.column("post_sampling_mean")
        self.assertEqual(len(scaled), 2)
        self.assertGreater(scaled[0], 0)
        self.assertGreaterEqual(scaled[1] / scaled[0], 1.5)
        self.assertLessEqual(scaled[1] / scaled[0], 3.0)
