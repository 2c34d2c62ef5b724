"""
Prior-dependent constants that decide when agents follow recommendations.

Every agent type holds a prior over the treatment effect. Whether a type
complies with a recommendation depends only on that prior and on what the
planner publishes about its policy, so the planner can compute, before any
agent arrives:

* the probability of the "fighting chance" event ξ, in which first-stage
  rewards look so favourable to the treatment that even a skeptical prior
  is overturned (`estimate_xi_probability`);
* the largest exploration probability ρ for which a never-taker type still
  complies during the sampling stage (`exploration_probability_bound`);
* the approximation bound below which a type complies during the racing
  stage (`racing_threshold`), and the sampling length and racing phase at
  which that is guaranteed (`minimum_sampling_length`,
  `full_compliance_phase`).

`certify_sampling` and `certify_racing` turn these constants into per-type
`Certificates`, which the theory-driven behavior model in `ivlab.agents`
consults.

The Monte Carlo estimates use the realized baseline structure of the
population: each simulated world draws the run-level baseline means from
their hyper-priors and the type mix of the first-stage samples from the
population fractions.
"""


from __future__ import annotations
from typing import Optional, Sequence, TYPE_CHECKING
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from math import ceil, inf, log, sqrt

import numpy as np
from numpy.random import Generator

from .errors import IVLabError, ConfigurationError
from .stats import TruncatedGaussian, GaussianBaseline, truncated_mean, truncated_tail_probability
from .util import check_probability

if TYPE_CHECKING:
    from .agents import PopulationSpec


DEFAULT_MONTE_CARLO_ITERS = 1000
"""Default number of simulated first stages behind each P[ξ] estimate."""


class NotNeverTakerError(IVLabError):
    """
    The exploration ceiling was requested for a type whose prior mean effect
    is non-negative, so recommending treatment cannot change its action.
    """
    pass


class Preference(Enum):
    """The action a type takes when it has no recommendation to go on."""

    NEVER_TAKER = 0
    """Prefers control: prior mean effect below zero."""

    ALWAYS_TAKER = 1
    """Prefers treatment: prior mean effect zero or above."""

    @property
    def action(self) -> int:
        """The preferred binary action."""
        return self.value


@dataclass(frozen=True)
class PriorSpec:
    """
    One agent type's prior: a truncated Gaussian over the treatment effect
    (or one per arm, for k-arm populations) and the baseline reward model.
    Exactly one of `theta_prior` and `arm_priors` is given.
    """
    theta_prior: Optional[TruncatedGaussian] = None
    """Prior over the binary treatment effect θ."""
    baseline: GaussianBaseline = GaussianBaseline()
    """Baseline (confounding) reward of this type."""
    arm_priors: tuple[TruncatedGaussian, ...] = ()
    """Independent priors over θ¹..θᵏ, with strictly decreasing means."""

    def __post_init__(self):
        if (self.theta_prior is None) == (len(self.arm_priors) == 0):
            raise ConfigurationError("a prior needs either theta_prior or arm_priors, not both")
        if self.arm_priors:
            if len(self.arm_priors) < 2:
                raise ConfigurationError("arm_priors needs at least two arms")
            means = [truncated_mean(p) for p in self.arm_priors]
            if any(a <= b for (a, b) in zip(means, means[1:])):
                raise ConfigurationError(f"arm prior means must be strictly decreasing, got {means}")

    def is_binary(self) -> bool:
        return self.theta_prior is not None

    @property
    def arm_count(self) -> int:
        """1 for a binary prior, otherwise the number of arms."""
        return 1 if self.is_binary() else len(self.arm_priors)

    @cached_property
    def prior_mean_theta(self) -> float:
        """μ^(u), the prior mean of θ (binary priors only)."""
        assert self.theta_prior is not None
        return truncated_mean(self.theta_prior)

    @cached_property
    def arm_means(self) -> tuple[float, ...]:
        """μ^(u)_1..μ^(u)_k, the prior means of the per-arm effects."""
        return tuple(truncated_mean(p) for p in self.arm_priors)

    @property
    def preference(self) -> Preference:
        return Preference.NEVER_TAKER if self.prior_mean_theta < 0 else Preference.ALWAYS_TAKER

    def preferred_action(self) -> int:
        """The action taken without a (trusted) recommendation; arm 1 for k-arm priors."""
        return self.preference.action if self.is_binary() else 1

    def sample_theta(self, rng: Generator, size: int) -> np.ndarray:
        """Draws `size` effects from this prior: shape `(size,)`, or `(size, k)` for k arms."""
        if self.theta_prior is not None:
            return self.theta_prior.sample(rng, size)
        return np.stack([p.sample(rng, size) for p in self.arm_priors], axis=1)


@dataclass(frozen=True)
class XiConfig:
    """The published first-stage parameters that event ξ depends on."""
    ell0: int
    """Number of control samples the first stage must collect."""
    ell1: int
    """Number of treatment samples the first stage must collect."""
    delta: float
    """Failure probability inside the event's confidence terms."""
    g_gap_bound: float = 0.0
    """G, an upper bound on the expected baseline gap E[g¹ − g⁰]."""
    sigma_g: float = 1.0
    """Sub-Gaussian norm of the baseline reward."""
    g_gap_bounds: tuple[float, ...] = ()
    """
    G^(u) for each type u, the bound on the baseline gap under that type's
    prior. Empty means `g_gap_bound` for every type.
    """

    def __post_init__(self):
        if self.ell0 < 1 or self.ell1 < 1:
            raise ConfigurationError(f"ell0 and ell1 must be at least 1, got {self.ell0}, {self.ell1}")
        check_probability("xi delta", self.delta)
        if self.sigma_g < 0:
            raise ConfigurationError(f"sigma_g must be non-negative, got {self.sigma_g!r}")

    def gap_for(self, type_index: Optional[int]=None) -> float:
        """
        G^(u) for `type_index`. Without a type, the largest configured bound,
        which bounds the gap under every type's prior at once.
        """
        if not self.g_gap_bounds:
            return self.g_gap_bound
        if type_index is None:
            return max(self.g_gap_bounds)
        return self.g_gap_bounds[type_index]

    def running(self) -> XiConfig:
        """The single event the sampling stage checks: every type's G replaced by `gap_for()`."""
        return replace(self, g_gap_bound=self.gap_for(), g_gap_bounds=())

    def check_types(self, type_count: int) -> None:
        if self.g_gap_bounds and len(self.g_gap_bounds) != type_count:
            raise ConfigurationError(
                f"g_gap_bounds has {len(self.g_gap_bounds)} entries for a population of {type_count} types")

    def _width(self, ell: int) -> float:
        return self.sigma_g * sqrt(2 * log(2 / self.delta) / ell)

    def margin(self, type_index: Optional[int]=None) -> float:
        """How far ȳ¹ must exceed ȳ⁰ for ξ^(u) to hold."""
        return self._width(self.ell0) + self._width(self.ell1) + self.gap_for(type_index) + 0.5

    def mirrored_margin(self, type_index: Optional[int]=None) -> float:
        """How far ȳ¹ must fall below the expected baseline for the mirrored event to hold."""
        return self._width(self.ell1) + self.gap_for(type_index) + 0.5


@dataclass(frozen=True)
class MonteCarloEstimate:
    """A Monte Carlo probability with its standard error."""
    value: float
    std_error: float
    iters: int

    @classmethod
    def from_hits(cls, hits: np.ndarray) -> MonteCarloEstimate:
        iters = len(hits)
        p = float(np.mean(hits))
        return cls(p, sqrt(p * (1 - p) / iters), iters)

    def __str__(self) -> str:
        return f"{self.value:.6f} ± {self.std_error:.6f}"


@dataclass(frozen=True)
class Certificates:
    """
    Which agent types currently comply with recommendations, and which rule
    certified each of them (empty for types that do not comply).
    """
    complies: tuple[bool, ...]
    reasons: tuple[str, ...]

    def __post_init__(self):
        assert len(self.complies) == len(self.reasons)

    @classmethod
    def none(cls, type_count: int) -> Certificates:
        return cls((False,) * type_count, ("",) * type_count)

    @classmethod
    def forced(cls, type_count: int, compliant: Sequence[int]) -> Certificates:
        """Certificates in which exactly the listed types comply by assumption."""
        return cls(tuple(u in compliant for u in range(type_count)),
                   tuple("forced" if u in compliant else "" for u in range(type_count)))

    def holds(self, type_index: int) -> bool:
        return self.complies[type_index]

    def certify(self, type_index: int, reason: str) -> Certificates:
        """Returns a copy in which `type_index` complies, certified by `reason`."""
        complies = list(self.complies)
        reasons = list(self.reasons)
        complies[type_index] = True
        reasons[type_index] = reason
        return replace(self, complies=tuple(complies), reasons=tuple(reasons))

    def merge(self, other: Certificates) -> Certificates:
        """Returns certificates holding wherever either input holds."""
        merged = self
        for (u, ok) in enumerate(other.complies):
            if ok and not merged.complies[u]:
                merged = merged.certify(u, other.reasons[u])
        return merged

    def compliant_fraction(self, fractions: Sequence[float]) -> float:
        """p_c, the population fraction of compliant types."""
        return float(sum(p for (p, ok) in zip(fractions, self.complies) if ok))

    def __str__(self) -> str:
        return ", ".join(f"{u}:{r or '-'}" for (u, r) in enumerate(self.reasons))


def xi_event_holds(y_bar_1: float, y_bar_0: float, cfg: XiConfig, type_index: Optional[int]=None) -> bool:
    """
    Does the first stage's treatment mean ȳ¹ exceed its control mean ȳ⁰ by
    more than `cfg.margin(type_index)`? With a type this is ξ^(u) against
    that type's G^(u).
    """
    return y_bar_1 > y_bar_0 + cfg.margin(type_index)


def xi_event_holds_mirrored(y_bar_1: float, expected_baseline: float, cfg: XiConfig,
                            type_index: Optional[int]=None) -> bool:
    """
    For populations in which every type prefers treatment: does ȳ¹ fall
    below the prior expected baseline reward by more than
    `cfg.mirrored_margin(type_index)`?
    """
    return y_bar_1 + cfg.mirrored_margin(type_index) < expected_baseline


def _pooled_means(pop: PopulationSpec, group: Sequence[int], count: int, mu_g: np.ndarray,
                  rng: Generator) -> np.ndarray:
    # Exact law of the mean of `count` baseline draws whose types are drawn
    # from `group` in proportion to the population fractions.
    fractions = np.array([pop.types[u].fraction for u in group])
    noise_var = np.array([pop.types[u].prior.baseline.noise_std**2 for u in group])
    counts = rng.multinomial(count, fractions / fractions.sum(), size=mu_g.shape[0])
    total = (counts * mu_g[:, group]).sum(axis=1)
    total += np.sqrt(counts @ noise_var) * rng.standard_normal(mu_g.shape[0])
    return total / count


def _realize_baseline_means(pop: PopulationSpec, iters: int, rng: Generator) -> np.ndarray:
    return np.stack([t.prior.baseline.hyper_mean + t.prior.baseline.hyper_std * rng.standard_normal(iters)
                     for t in pop.types], axis=1)


def expected_baseline(pop: PopulationSpec, group: Sequence[int]) -> float:
    """The prior expected baseline reward of a sample drawn from `group`."""
    fractions = np.array([pop.types[u].fraction for u in group])
    means = np.array([pop.types[u].prior.baseline.hyper_mean for u in group])
    return float(fractions @ means / fractions.sum())


def estimate_xi_probability(pop: PopulationSpec, cfg: XiConfig, iters: int, rng: Generator,
                            type_index: Optional[int]=None, mirrored: bool=False) -> MonteCarloEstimate:
    """
    Estimates P[ξ^(u)] under the prior of type u = `type_index`, against
    that type's G^(u), by simulating the first stage `iters` times: θ is drawn from that type's prior, the
    run-level baseline means from their hyper-priors, and ȳ⁰ (ȳ¹) is the mean
    reward of `cfg.ell0` never-taker (`cfg.ell1` always-taker) arrivals.

    `type_index` defaults to the first never-taker (the first always-taker
    when `mirrored`). Raises `ConfigurationError` if the population lacks a
    preference class the event needs.
    """
    if iters < 1:
        raise ConfigurationError(f"iters must be at least 1, got {iters}")
    never = pop.never_takers()
    always = pop.always_takers()
    if not always or (not mirrored and not never):
        raise ConfigurationError("event ξ needs both never-takers and always-takers in the population")
    if type_index is None:
        type_index = always[0] if mirrored else never[0]

    theta = pop.types[type_index].prior.sample_theta(rng, iters)
    return MonteCarloEstimate.from_hits(simulate_xi(pop, cfg, theta, rng, mirrored, type_index))


def simulate_xi(pop: PopulationSpec, cfg: XiConfig, theta: np.ndarray, rng: Generator,
                mirrored: bool=False, type_index: Optional[int]=None) -> np.ndarray:
    """
    Simulates one first stage per entry of `theta` (with freshly drawn
    run-level baseline means) and returns whether ξ^(u) for u = `type_index`
    (or the mirrored event) holds in each. Without a type, the event is the
    one the sampling stage checks.
    """
    cfg.check_types(len(pop.types))
    never = pop.never_takers()
    always = pop.always_takers()
    mu_g = _realize_baseline_means(pop, len(theta), rng)
    y1 = theta + _pooled_means(pop, always, cfg.ell1, mu_g, rng)
    if mirrored:
        return y1 + cfg.mirrored_margin(type_index) < expected_baseline(pop, always)
    y0 = _pooled_means(pop, never, cfg.ell0, mu_g, rng)
    return y1 > y0 + cfg.margin(type_index)


def exploration_probability_bound(mu0: float, p_xi: float) -> float:
    """
    Returns the largest exploration probability ρ at which a never-taker type
    with prior mean `mu0` still complies during the sampling stage:
    1 + 4μ/(P[ξ] − 4μ), clamped to [0, 1]. Raises `NotNeverTakerError` if
    `mu0 >= 0`.
    """
    if mu0 >= 0:
        raise NotNeverTakerError(f"prior mean {mu0!r} is not negative")
    check_probability("p_xi", p_xi, open_low=False, open_high=False)
    return min(1.0, max(0.0, 1 + 4 * mu0 / (p_xi - 4 * mu0)))


def exploration_probability_bound_mirrored(mu1: float, p_xi: float) -> float:
    """
    The always-taker counterpart of `exploration_probability_bound`, for
    exploration that recommends control: 1 − 4μ/(P[ξ] + 4μ) for `mu1 > 0`.
    """
    if mu1 <= 0:
        raise ConfigurationError(f"prior mean {mu1!r} is not positive")
    return exploration_probability_bound(-mu1, p_xi)


def xi_delta_admissible(delta: float, p_xi: float) -> bool:
    """Is δ < P[ξ]/8, as the sampling stage requires before it starts?"""
    return delta < p_xi / 8


def _incentive_tail(prior: PriorSpec, tau: float) -> float:
    assert prior.theta_prior is not None
    if prior.preference is Preference.NEVER_TAKER:
        return truncated_tail_probability(prior.theta_prior, tau)
    return 1.0 - truncated_tail_probability(prior.theta_prior, -tau)


def racing_threshold(prior: PriorSpec, tau: float) -> float:
    """
    Returns the approximation bound at or below which a type with this prior
    complies in the racing stage: τ·P[θ > τ]/4 for never-takers and
    τ·P[θ < −τ]/4 for always-takers.
    """
    check_probability("tau", tau)
    return tau * _incentive_tail(prior, tau) / 4


def delta_budget(tau: float, p_tail: float) -> float:
    """Returns the largest δ, τP/(2τP + 2), that the racing compliance argument allows."""
    check_probability("tau", tau)
    return tau * p_tail / (2 * tau * p_tail + 2)


def minimum_sampling_length(tau_p: float, rho: float, p_c1: float, sigma_g: float, delta: float) -> int:
    """
    Returns the number of sampling-stage rounds ℓ after which a type with
    racing incentive τP complies in the racing stage, given exploration
    probability `rho` and sampling-stage compliant fraction `p_c1`.
    """
    check_probability("rho", rho)
    check_probability("delta", delta)
    assert tau_p > 0 and p_c1 > 0
    l5 = log(5 / delta)
    kappa1 = 8 * sigma_g * sqrt(2 * l5) / (p_c1 * rho * (1 - rho))
    kappa2 = (3 - rho) * sqrt(rho * l5 / (2 * (1 - rho)))
    return ceil((kappa1 / tau_p + kappa2)**2)


def full_compliance_phase(tau_p_star: float, p_c: float, h: int, sigma_g: float, delta: float) -> int:
    """
    Returns the racing phase q after which the type most resistant to
    compliance (racing incentive `tau_p_star`) complies, when a fraction
    `p_c` of the population complies from the start.
    """
    check_probability("delta", delta)
    assert tau_p_star > 0 and p_c > 0 and h > 0
    l5 = log(5 / delta)
    root = (32 * sigma_g * sqrt(2 * l5) / tau_p_star + sqrt(50 * l5)) / (2 * h * p_c)
    return ceil(root**2)


def default_gap_bound(pop: PopulationSpec, mirrored: bool=False) -> float:
    """
    Returns the default G. For the ordinary event this is 0 when never-takers
    and always-takers share a baseline hyper-mean, and otherwise their
    hyper-mean gap plus three of the largest hyper standard deviation. For
    the mirrored event it is three of the largest always-taker hyper standard
    deviation.
    """
    never = pop.never_takers()
    always = pop.always_takers()
    hyper = [pop.types[u].prior.baseline.hyper_std for u in always + ([] if mirrored else never)]
    spread = 3 * max(hyper, default=0.0)
    if mirrored:
        return spread
    if not never or not always:
        return 0.0
    gap = expected_baseline(pop, always) - expected_baseline(pop, never)
    return 0.0 if gap == 0 else gap + spread


def xi_event_holds_k(y_bars: Sequence[float], mu_i: float, ell: int, sigma_g: float, delta: float) -> bool:
    """
    The k-arm event ξ^(u)_i, given the sample means ȳ¹..ȳ^{i−1} of the arms
    explored so far and the type's prior mean `mu_i` for arm i: arm 1 is
    clearly the worst of them, and even the best of them falls clearly short
    of `mu_i`.
    """
    assert len(y_bars) >= 1
    c = sigma_g * sqrt(2 * log(3 / delta) / ell) + 0.25
    others = y_bars[1:]
    if others and not y_bars[0] + c <= min(others) - c:
        return False
    return max(y_bars) + c <= mu_i


def estimate_xi_probability_k(pop: PopulationSpec, ell: int, sigma_g: float, delta: float, iters: int,
                              rng: Generator, type_index: int=0) -> MonteCarloEstimate:
    """
    Estimates P[ξ^(u)] = min_i P[ξ^(u)_i] for a k-arm population under the
    prior of `type_index`: each world draws θ from that prior, collects ℓ
    samples of arm 1, and then ℓ samples of each further arm in turn.
    """
    if iters < 1:
        raise ConfigurationError(f"iters must be at least 1, got {iters}")
    prior = pop.types[type_index].prior
    if prior.is_binary():
        raise ConfigurationError("estimate_xi_probability_k needs a k-arm population")
    hits = simulate_xi_k(pop, prior.arm_means, prior.sample_theta(rng, iters), ell, sigma_g, delta, rng)
    estimates = [MonteCarloEstimate.from_hits(hits[:, i]) for i in range(1, prior.arm_count)]
    return min(estimates, key=lambda e: e.value)


def simulate_xi_k(pop: PopulationSpec, arm_means: Sequence[float], theta: np.ndarray, ell: int, sigma_g: float,
                  delta: float, rng: Generator) -> np.ndarray:
    """
    Simulates the k-arm sampling stage once per row of `theta` and returns a
    boolean array whose column i−1 says whether ξ_i holds against the prior
    means `arm_means`. Column 0 is always false.
    """
    (iters, k) = theta.shape
    everyone = list(range(len(pop.types)))
    mu_g = _realize_baseline_means(pop, iters, rng)
    c = sigma_g * sqrt(2 * log(3 / delta) / ell) + 0.25
    y_bars = [theta[:, 0] + _pooled_means(pop, everyone, ell, mu_g, rng)]
    hits = np.zeros((iters, k), dtype=bool)
    for i in range(1, k):
        best = np.max(np.stack(y_bars), axis=0)
        event = best + c <= arm_means[i]
        if len(y_bars) > 1:
            event &= y_bars[0] + c <= np.min(np.stack(y_bars[1:]), axis=0) - c
        hits[:, i] = event
        y_bars.append(theta[:, i] + _pooled_means(pop, everyone, ell, mu_g, rng))
    return hits


def exploration_probability_bound_k(arm_means: Sequence[float], p_xi: float) -> float:
    """
    Returns the k-arm exploration ceiling 1 + 8·min(μ_j − μ_i)/P[ξ^(u)] over
    arm pairs i < j, clamped to [0, 1]. Raises `ConfigurationError` unless
    every arm after the first has a positive prior mean.
    """
    if any(m <= 0 for m in arm_means[1:]):
        raise ConfigurationError("every arm after the first needs a positive prior mean")
    check_probability("p_xi", p_xi, open_low=False, open_high=False)
    if p_xi == 0:
        return 0.0
    worst = min(arm_means[j] - arm_means[i] for i in range(len(arm_means)) for j in range(i + 1, len(arm_means)))
    return min(1.0, max(0.0, 1 + 8 * worst / p_xi))


def separation_probability(prior: PriorSpec, tau: float, iters: int, rng: Generator) -> MonteCarloEstimate:
    """Estimates P[min over arm pairs of |θᵃ − θᵇ| > τ] under a k-arm prior."""
    theta = prior.sample_theta(rng, iters)
    gaps = np.abs(theta[:, :, None] - theta[:, None, :])
    k = prior.arm_count
    gaps[:, np.arange(k), np.arange(k)] = inf
    return MonteCarloEstimate.from_hits(gaps.min(axis=(1, 2)) > tau)


def racing_threshold_k(prior: PriorSpec, tau: float, iters: int, rng: Generator) -> float:
    """Returns τ·P[min pairwise gap > τ]/4, the k-arm racing compliance threshold."""
    check_probability("tau", tau)
    return tau * separation_probability(prior, tau, iters, rng).value / 4


def racing_thresholds(pop: PopulationSpec, tau: float, iters: int=DEFAULT_MONTE_CARLO_ITERS,
                      rng: Optional[Generator]=None) -> tuple[float, ...]:
    """Returns the racing compliance threshold of every type."""
    if pop.arm_count == 1:
        return tuple(racing_threshold(t.prior, tau) for t in pop.types)
    assert rng is not None
    return tuple(racing_threshold_k(t.prior, tau, iters, rng) for t in pop.types)


@dataclass(frozen=True)
class SamplingCertification:
    """The outcome of `certify_sampling`: the certificates and the evidence behind them."""
    certificates: Certificates
    p_xi: tuple[Optional[MonteCarloEstimate], ...]
    """P̂ of the checked event under the prior of each type that could be incentivized, else None."""
    ceilings: tuple[float, ...]
    """The exploration ceiling of each type (0 for types that cannot be incentivized)."""


def certify_sampling(pop: PopulationSpec, cfg: XiConfig, rho: float, iters: int, rng: Generator,
                     mirrored: bool=False) -> SamplingCertification:
    """
    Certifies, per type, compliance during the sampling stage at exploration
    probability `rho`. Never-takers (always-takers when `mirrored`) are
    certified when `rho` lies within their own ceiling, with the probability
    of the event the stage checks (`cfg.running()`) estimated under their own
    prior; the other preference class is never certified.
    """
    cfg.check_types(len(pop.types))
    running = cfg.running()
    target = Preference.ALWAYS_TAKER if mirrored else Preference.NEVER_TAKER
    certs = Certificates.none(len(pop.types))
    estimates: list[Optional[MonteCarloEstimate]] = []
    ceilings: list[float] = []
    for (u, t) in enumerate(pop.types):
        if t.prior.preference is not target:
            estimates.append(None)
            ceilings.append(0.0)
            continue
        p_xi = estimate_xi_probability(pop, running, iters, rng, type_index=u, mirrored=mirrored)
        mu = t.prior.prior_mean_theta
        ceiling = (exploration_probability_bound_mirrored(mu, p_xi.value) if mirrored
                   else exploration_probability_bound(mu, p_xi.value))
        estimates.append(p_xi)
        ceilings.append(ceiling)
        if rho <= ceiling:
            certs = certs.certify(u, "rho")
    return SamplingCertification(certs, tuple(estimates), tuple(ceilings))


def certify_racing(pop: PopulationSpec, bound: float, tau: float,
                   thresholds: Optional[Sequence[float]]=None) -> Certificates:
    """
    Certifies, per type, compliance during the racing stage given the
    current approximation bound: a type complies when `bound` is at most its
    racing threshold. k-arm populations must pass precomputed `thresholds`.
    """
    if thresholds is None:
        thresholds = racing_thresholds(pop, tau)
    certs = Certificates.none(len(pop.types))
    for (u, threshold) in enumerate(thresholds):
        if threshold > 0 and bound <= threshold:
            certs = certs.certify(u, "bound")
    return certs


__all__ = ['DEFAULT_MONTE_CARLO_ITERS', 'NotNeverTakerError', 'Preference', 'PriorSpec', 'XiConfig',
           'MonteCarloEstimate', 'Certificates', 'xi_event_holds', 'xi_event_holds_mirrored',
           'expected_baseline', 'estimate_xi_probability', 'simulate_xi', 'exploration_probability_bound',
           'exploration_probability_bound_mirrored', 'xi_delta_admissible', 'racing_threshold',
           'delta_budget', 'minimum_sampling_length', 'full_compliance_phase', 'default_gap_bound',
           'xi_event_holds_k', 'estimate_xi_probability_k', 'simulate_xi_k', 'exploration_probability_bound_k',
           'separation_probability', 'racing_threshold_k', 'racing_thresholds', 'SamplingCertification',
           'certify_sampling', 'certify_racing']

import unittest

from .stats import Streams


def _prior(mean: float, std_dev: float=1.0, hyper_mean: float=0.0, hyper_std: float=1.0,
           noise_std: float=1.0) -> PriorSpec:
    return PriorSpec(TruncatedGaussian(mean, std_dev), GaussianBaseline(hyper_mean, hyper_std, noise_std))


class TestPriorSpec(unittest.TestCase):
    def test_preference(self) -> None:
        self.assertIs(_prior(-0.5).preference, Preference.NEVER_TAKER)
        self.assertIs(_prior(0.9).preference, Preference.ALWAYS_TAKER)
        self.assertAlmostEqual(_prior(-0.5).prior_mean_theta, -0.1437, places=4)
        self.assertEqual(_prior(-0.5).preferred_action(), 0)

    def test_arm_priors(self) -> None:
        prior = PriorSpec(arm_priors=(TruncatedGaussian(0.5, 0.3), TruncatedGaussian(0.2, 0.3)))
        self.assertEqual(prior.arm_count, 2)
        self.assertEqual(prior.preferred_action(), 1)
        self.assertEqual(prior.sample_theta(Streams(1).stream('theta'), 7).shape, (7, 2))
        self.assertRaises(ConfigurationError, PriorSpec,
                          arm_priors=(TruncatedGaussian(0.2, 0.3), TruncatedGaussian(0.5, 0.3)))
        self.assertRaises(ConfigurationError, PriorSpec)


class TestXi(unittest.TestCase):
    def test_event(self) -> None:
        cfg = XiConfig(100, 100, 0.1, g_gap_bound=0.5, sigma_g=1.0)
        self.assertAlmostEqual(cfg.margin(), 1.4896, delta=1e-4)
        self.assertTrue(xi_event_holds(2.0, 0.0, cfg))
        self.assertFalse(xi_event_holds(0.3, 0.3, cfg))
        noiseless = XiConfig(100, 100, 0.1, g_gap_bound=0.0, sigma_g=0.0)
        self.assertTrue(xi_event_holds(0.6, 0.0, noiseless))
        self.assertFalse(xi_event_holds(0.5, 0.0, noiseless))

    def test_mirrored_event(self) -> None:
        cfg = XiConfig(100, 100, 0.1, sigma_g=0.0)
        self.assertTrue(xi_event_holds_mirrored(-0.6, 0.0, cfg))
        self.assertFalse(xi_event_holds_mirrored(-0.4, 0.0, cfg))

    def test_invalid(self) -> None:
        self.assertRaises(ConfigurationError, XiConfig, 0, 10, 0.1)
        self.assertRaises(ConfigurationError, XiConfig, 10, 10, 1.0)
        self.assertRaises(ConfigurationError, XiConfig(10, 10, 0.1, g_gap_bounds=(0.0, 1.0)).check_types, 3)

    def test_per_type_event(self) -> None:
        cfg = XiConfig(100, 100, 0.1, sigma_g=0.0, g_gap_bounds=(0.0, 1.0))
        self.assertEqual(cfg.margin(0), 0.5)
        self.assertEqual(cfg.margin(1), 1.5)
        self.assertTrue(xi_event_holds(1.0, 0.0, cfg, type_index=0))
        self.assertFalse(xi_event_holds(1.0, 0.0, cfg, type_index=1))
        # Without a type the event is checked against the largest G.
        self.assertFalse(xi_event_holds(1.0, 0.0, cfg))
        self.assertEqual(cfg.running(), XiConfig(100, 100, 0.1, g_gap_bound=1.0, sigma_g=0.0))
        self.assertEqual(XiConfig(100, 100, 0.1, g_gap_bound=0.3).gap_for(1), 0.3)


class TestCeilings(unittest.TestCase):
    def test_exploration_bound(self) -> None:
        self.assertAlmostEqual(exploration_probability_bound(-0.1, 0.2), 1 / 3, places=12)
        self.assertEqual(exploration_probability_bound(-0.1, 0.0), 0.0)
        self.assertAlmostEqual(exploration_probability_bound(-0.1, 1e-9), 0.0, delta=1e-8)
        self.assertRaises(NotNeverTakerError, exploration_probability_bound, 0.0, 0.2)
        self.assertAlmostEqual(exploration_probability_bound_mirrored(0.1, 0.2), 1 / 3, places=12)

    def test_exploration_bound_monotone(self) -> None:
        values = [exploration_probability_bound(-0.14, p) for p in np.linspace(0.001, 1.0, 50)]
        self.assertTrue(all(a < b for (a, b) in zip(values, values[1:])))
        self.assertTrue(all(0 <= v < 1 for v in values))

    def test_racing_threshold(self) -> None:
        self.assertAlmostEqual(racing_threshold(_prior(-0.5), 0.43), 0.43 * 0.1751 / 4, places=5)
        self.assertAlmostEqual(racing_threshold(_prior(-0.5), 0.43), 0.01882, places=5)
        self.assertAlmostEqual(racing_threshold(_prior(0.9), 0.43), 0.01327, places=4)
        # No prior mass beyond τ: the type can never be persuaded at this τ.
        self.assertEqual(racing_threshold(PriorSpec(TruncatedGaussian(-0.5, 0.1, -1.0, 0.3)), 0.43), 0.0)

    def test_racing_threshold_monotone(self) -> None:
        values = [racing_threshold(_prior(m), 0.43) for m in np.linspace(-0.1, -0.9, 20)]
        self.assertTrue(all(a >= b for (a, b) in zip(values, values[1:])))

    def test_delta_budget(self) -> None:
        self.assertEqual(delta_budget(0.43, 0.0), 0.0)
        self.assertAlmostEqual(delta_budget(0.43, 0.1751), 0.03501, places=5)
        self.assertRaises(ConfigurationError, delta_budget, 1.0, 1.0)
        self.assertAlmostEqual(delta_budget(1 - 1e-12, 1.0), 0.25, places=9)

    def test_minimum_sampling_length(self) -> None:
        self.assertEqual(minimum_sampling_length(0.25, 0.1, 0.5, 0.0, 0.1),
                         ceil((2.9 * sqrt(0.1 * log(50) / 1.8))**2))
        ell = minimum_sampling_length(0.25, 0.1, 0.5, 1.0, 0.1)
        self.assertAlmostEqual(ell / 3.96e6, 1.0, delta=0.01)
        self.assertGreaterEqual(ell, minimum_sampling_length(0.5, 0.1, 0.5, 1.0, 0.1))
        self.assertGreaterEqual(ell, minimum_sampling_length(0.25, 0.1, 0.9, 1.0, 0.1))

    def test_full_compliance_phase(self) -> None:
        self.assertEqual(full_compliance_phase(0.25, 0.5, 50, 1.0, 0.1), 56)
        self.assertEqual(full_compliance_phase(1e300, 0.5, 50, 1.0, 0.1), ceil(50 * log(50) / 50**2))
        self.assertLessEqual(full_compliance_phase(0.5, 0.5, 50, 1.0, 0.1), 56)
        self.assertLessEqual(full_compliance_phase(0.25, 0.9, 50, 1.0, 0.1), 56)

    def test_k_arm_ceiling(self) -> None:
        self.assertAlmostEqual(exploration_probability_bound_k([0.5, 0.45], 0.8), 0.5, places=12)
        self.assertEqual(exploration_probability_bound_k([0.5, 0.2], 0.1), 0.0)
        self.assertRaises(ConfigurationError, exploration_probability_bound_k, [0.5, -0.2], 0.1)


def _population(*types: tuple[PriorSpec, float]) -> PopulationSpec:
    from .agents import PopulationSpec, TypeSpec
    return PopulationSpec(tuple(TypeSpec(p, f) for (p, f) in types))


def _skeptic_and_believer(hyper_gap: float=0.1) -> PopulationSpec:
    return _population((_prior(-0.5, hyper_mean=0.0), 0.5), (_prior(0.9, hyper_mean=hyper_gap), 0.5))


class TestXiProbability(unittest.TestCase):
    def test_degenerate(self) -> None:
        cfg = XiConfig(100, 100, 0.1, sigma_g=0.0)
        sure = _population((_prior(-0.5, 1e-9, 0.0, 0.0, 0.0), 0.5), (_prior(0.9, 1.0, 10.0, 0.0, 0.0), 0.5))
        never = _population((_prior(-0.5, 1e-9, 0.0, 0.0, 0.0), 0.5), (_prior(0.9, 1.0, -10.0, 0.0, 0.0), 0.5))
        rng = Streams(5).stream('monte_carlo')
        self.assertEqual(estimate_xi_probability(sure, cfg, 200, rng).value, 1.0)
        self.assertEqual(estimate_xi_probability(never, cfg, 200, rng).value, 0.0)

    def test_missing_class(self) -> None:
        pop = _population((_prior(0.9), 1.0))
        cfg = XiConfig(10, 10, 0.1)
        rng = Streams(5).stream('monte_carlo')
        self.assertRaises(ConfigurationError, estimate_xi_probability, pop, cfg, 10, rng)
        self.assertIsInstance(estimate_xi_probability(pop, cfg, 10, rng, mirrored=True), MonteCarloEstimate)

    def test_reproducible_with_bounded_error(self) -> None:
        pop = _skeptic_and_believer()
        cfg = XiConfig(1000, 1000, 1e-4, default_gap_bound(pop))
        a = estimate_xi_probability(pop, cfg, 1000, Streams(9).stream('monte_carlo'))
        b = estimate_xi_probability(pop, cfg, 1000, Streams(9).stream('monte_carlo'))
        self.assertEqual(a, b)
        self.assertLessEqual(a.std_error, 0.5 / sqrt(1000))

    def test_skeptic_and_believer_ceiling(self) -> None:
        pop = _skeptic_and_believer()
        cfg = XiConfig(1000, 1000, 1e-4, default_gap_bound(pop))
        self.assertAlmostEqual(cfg.g_gap_bound, 3.1, places=12)
        p_xi = estimate_xi_probability(pop, cfg, 20000, Streams(10).stream('monte_carlo'))
        rho = exploration_probability_bound(pop.types[0].prior.prior_mean_theta, p_xi.value)
        self.assertTrue(5e-4 <= rho <= 2e-2, rho)

    def test_gap_bound(self) -> None:
        self.assertEqual(default_gap_bound(_skeptic_and_believer(0.0)), 0.0)
        self.assertAlmostEqual(default_gap_bound(_skeptic_and_believer(-0.5)), 2.5, places=12)
        self.assertAlmostEqual(default_gap_bound(_skeptic_and_believer(), mirrored=True), 3.0, places=12)

    def test_per_type_probability(self) -> None:
        pop = _population((_prior(-0.5), 0.25), (_prior(-0.2), 0.25), (_prior(0.9, hyper_mean=0.1), 0.5))
        shared = XiConfig(1000, 1000, 0.1, g_gap_bound=0.0)
        per_type = XiConfig(1000, 1000, 0.1, g_gap_bounds=(0.0, 0.5, 0.0))

        def p_xi(cfg: XiConfig, u: int) -> float:
            return estimate_xi_probability(pop, cfg, 4000, Streams(14).stream('monte_carlo'), type_index=u).value

        self.assertEqual(p_xi(per_type, 0), p_xi(shared, 0))
        self.assertLess(p_xi(per_type, 1), p_xi(shared, 1))
        # Certification uses the checked event, whose G is the larger one.
        result = certify_sampling(pop, per_type, 1e-5, 4000, Streams(14).stream('monte_carlo'))
        p0 = result.p_xi[0]
        assert p0 is not None
        self.assertEqual(p0.value, p_xi(per_type.running(), 0))
        self.assertLess(p0.value, p_xi(per_type, 0))
        self.assertIsNone(result.p_xi[2])


class TestCertificates(unittest.TestCase):
    def test_sampling(self) -> None:
        pop = _skeptic_and_believer()
        cfg = XiConfig(1000, 1000, 1e-4, default_gap_bound(pop))
        result = certify_sampling(pop, cfg, 1e-5, 2000, Streams(11).stream('monte_carlo'))
        self.assertEqual(result.certificates.complies, (True, False))
        self.assertIsNone(result.p_xi[1])
        self.assertFalse(certify_sampling(pop, cfg, 0.5, 2000, Streams(11).stream('monte_carlo'))
                         .certificates.holds(0))

    def test_racing(self) -> None:
        pop = _skeptic_and_believer()
        self.assertEqual(certify_racing(pop, 0.015, 0.43).complies, (True, False))
        self.assertEqual(certify_racing(pop, 0.001, 0.43).complies, (True, True))
        self.assertEqual(certify_racing(pop, 0.5, 0.43).complies, (False, False))

    def test_merge(self) -> None:
        a = Certificates.forced(2, [0])
        b = Certificates.none(2).certify(1, "phase")
        merged = a.merge(b)
        self.assertEqual(merged.complies, (True, True))
        self.assertEqual(merged.reasons, ("forced", "phase"))
        self.assertAlmostEqual(a.compliant_fraction([0.3, 0.7]), 0.3)


class TestKArm(unittest.TestCase):
    def test_event(self) -> None:
        self.assertTrue(xi_event_holds_k([0.0], 0.9, 100, 0.0, 0.1))
        # Arm 2's prior mean sits far below what arm 1 already delivers.
        self.assertFalse(xi_event_holds_k([0.0], -5.0, 100, 0.0, 0.1))
        self.assertFalse(xi_event_holds_k([0.0, 0.2], 0.95, 100, 0.0, 0.1))
        self.assertTrue(xi_event_holds_k([0.0, 0.6], 0.9, 100, 0.0, 0.1))

    def test_separation(self) -> None:
        rng = Streams(12).stream('monte_carlo')
        spread = PriorSpec(arm_priors=(TruncatedGaussian(0.8, 1e-9), TruncatedGaussian(-0.8, 1e-9)))
        close = PriorSpec(arm_priors=(TruncatedGaussian(0.1, 1e-9), TruncatedGaussian(0.0, 1e-9)))
        self.assertEqual(separation_probability(spread, 0.43, 100, rng).value, 1.0)
        self.assertEqual(separation_probability(close, 0.43, 100, rng).value, 0.0)
        self.assertAlmostEqual(racing_threshold_k(spread, 0.43, 100, rng), 0.43 / 4, places=12)

    def test_xi_probability_k(self) -> None:
        rng = Streams(13).stream('monte_carlo')
        prior = PriorSpec(arm_priors=(TruncatedGaussian(0.5, 1e-9), TruncatedGaussian(-0.9, 1e-9, -1.0, 1.0),
                                      TruncatedGaussian(-0.95, 1e-9)),
                          baseline=GaussianBaseline(0.0, 0.0, 0.0))
        pop = _population((prior, 1.0))
        self.assertEqual(estimate_xi_probability_k(pop, 100, 0.0, 0.1, 50, rng).value, 0.0)
