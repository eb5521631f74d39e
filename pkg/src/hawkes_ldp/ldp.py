"""
Level-1 large deviations of N_t/t: the explicit rate function of the
linear case and its convex analysis, rare-event probabilities by Girsanov
importance sampling, and time averages under the empirical measure of the
periodized path.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum, auto
from functools import partial
from math import ceil, exp, expm1, floor, inf, isfinite, log, pi, sqrt
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import poisson

from hawkes_ldp.likelihood import girsanov_log_ratio
from hawkes_ldp.models import IntensityModel, LinearRate, poisson_model
from hawkes_ldp.simulate import (
    EventStream,
    SimConfig,
    map_replicas,
    simulate_path,
    simulate_replicas,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Tail",
    "LinearRateParams",
    "RareEventEstimate",
    "LLNEstimate",
    "WindowFunctional",
    "linear_rate_fn",
    "rate_fn_derivative",
    "rate_fn_curvature",
    "rate_fn_minimum",
    "lln_mean",
    "clt_variance",
    "scaled_cgf",
    "legendre_rate_fn",
    "mean_matched_proposal",
    "tilted_proposal",
    "poisson_tail",
    "bahadur_rao_correction",
    "rare_event_probability",
    "horizon_ladder",
    "empirical_functional",
    "sandwich_bounds",
    "lln_estimate",
    "MIN_RELIABLE_ESS",
]

MIN_RELIABLE_ESS = 30


class Tail(Enum):
    UPPER = auto()
    LOWER = auto()


@dataclass(frozen=True)
class LinearRateParams:
    """
    the linear Hawkes law λ(z) = ν + z with ‖h‖_{L¹} = hnorm < 1
    ----------
    Arguments:
        - nu: float
            immigration rate ν > 0
        - hnorm: float
            kernel mass in [0, 1)
    """

    nu: float
    hnorm: float

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0 <= self.hnorm < 1:
            raise ValueError(f"hnorm >= 1: supercritical (hnorm = {self.hnorm})")

    @property
    def mean(self) -> float:
        return self.nu / (1 - self.hnorm)


def lln_mean(params: LinearRateParams) -> float:
    """μ = ν/(1 − ‖h‖)"""
    return params.mean


def clt_variance(params: LinearRateParams) -> float:
    """σ² = ν/(1 − ‖h‖)³, the limit of Var(N_t)/t"""
    return params.nu / (1 - params.hnorm) ** 3


def linear_rate_fn(params: LinearRateParams, x: float) -> float:
    """
    I(x) = x·log(x/(ν + x‖h‖)) − x + x‖h‖ + ν for x ≥ 0, +∞ for x < 0;
    I(0) = ν is the x → 0 limit
    """
    if x < 0:
        return inf
    nu, hnorm = params.nu, params.hnorm
    if x == 0:
        return nu
    return x * log(x / (nu + x * hnorm)) - x + x * hnorm + nu


def rate_fn_derivative(params: LinearRateParams, x: float) -> float:
    """I'(x), the tilt θ* that makes x the typical value"""
    if x <= 0:
        raise ValueError(f"I'(x) needs x > 0, got {x}")
    tilt = x / (params.nu + x * params.hnorm)
    return log(tilt) - params.hnorm * (tilt - 1)


def rate_fn_curvature(params: LinearRateParams, x: float) -> float:
    """I''(x) > 0"""
    if x <= 0:
        raise ValueError(f"I''(x) needs x > 0, got {x}")
    nu, hnorm = params.nu, params.hnorm
    denom = nu + x * hnorm
    return 1 / x - hnorm / denom - hnorm * nu / denom**2


def rate_fn_minimum(
    params: LinearRateParams, threshold: float, tail: Tail = Tail.UPPER
) -> tuple:
    """
    inf of I over {x ≥ a} (UPPER) or {x ≤ a} (LOWER); I is convex with its
    zero at μ, so the minimiser is the point of the set closest to μ
    ----------
    Returns:
        - tuple: (x*, I(x*))"""
    if tail == Tail.UPPER:
        x = max(threshold, params.mean)
    else:
        x = min(threshold, params.mean)
    return x, linear_rate_fn(params, x)


def scaled_cgf(params: LinearRateParams, theta: float) -> float:
    """
    Γ(θ) = lim (1/t)·log E[e^{θ N_t}] = ν(F − 1), where F is the moment
    generating function of a cluster size: the smallest root of
    F = exp(θ + ‖h‖(F − 1)). +∞ beyond θ_max = ‖h‖ − 1 − log‖h‖.
    """
    nu, hnorm = params.nu, params.hnorm
    if hnorm == 0:
        return nu * expm1(theta)
    if theta > hnorm - 1 - log(hnorm):
        return inf

    def fixed_point_gap(f):
        return log(f) - theta - hnorm * (f - 1)

    # the roots merge at F = 1/‖h‖ when θ = θ_max
    if fixed_point_gap(1 / hnorm) <= 0:
        return nu * (1 / hnorm - 1)
    root = brentq(fixed_point_gap, exp(theta - hnorm), 1 / hnorm, xtol=1e-15)
    return nu * (root - 1)


def legendre_rate_fn(params: LinearRateParams, x: float) -> float:
    """
    I(x) recovered numerically as sup_θ (θx − Γ(θ)); agrees with
    linear_rate_fn, which makes it an independent check of the closed form
    """
    if x < 0:
        return inf
    if x == 0:
        return params.nu
    hnorm = params.hnorm
    upper = hnorm - 1 - log(hnorm) if hnorm > 0 else log(x / params.nu) + 10
    result = minimize_scalar(
        lambda theta: scaled_cgf(params, theta) - theta * x,
        bounds=(-50.0, upper),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(-result.fun)


def mean_matched_proposal(model: IntensityModel, threshold: float) -> IntensityModel:
    """
    a proposal whose law of large numbers sits at the threshold: for a
    linear model ν' = a(1 − slope·‖h‖) with the kernel unchanged, otherwise
    a homogeneous Poisson(a)
    """
    if model.is_linear:
        hnorm = model.rate.slope * model.kernel.l1_norm
        return IntensityModel(
            model.kernel,
            LinearRate(nu=threshold * (1 - hnorm), slope=model.rate.slope),
            f"mean-matched({threshold:g})",
        )
    return poisson_model(threshold, f"poisson({threshold:g})")


def tilted_proposal(model: IntensityModel, threshold: float) -> IntensityModel:
    """
    the exponentially tilted linear Hawkes law with mean a: every cluster
    is tilted by e^{θ·size}, which multiplies the immigration rate and the
    offspring mean by the same factor F = a/(ν + a‖h‖)
    """
    params = model.linear_params()
    factor = threshold / (params.nu + threshold * params.hnorm)
    return IntensityModel(
        model.kernel,
        LinearRate(nu=model.rate.nu * factor, slope=model.rate.slope * factor),
        f"tilted({threshold:g})",
    )


def poisson_tail(nu: float, t: float, threshold: float, tail: Tail = Tail.UPPER) -> float:
    """exact P(N_t ≥ a·t) (or P(N_t ≤ a·t)) for a Poisson(ν) count"""
    level = round(threshold * t, 9)
    if tail == Tail.UPPER:
        return float(poisson.sf(ceil(level) - 1, nu * t))
    return float(poisson.cdf(floor(level), nu * t))


def bahadur_rao_correction(params: LinearRateParams, threshold: float, t: float) -> float:
    """
    (1/t)·log((1 − e^{−|θ*|})·sqrt(2πt/I''(a))): the leading finite-horizon
    term separating −(1/t)·log P(N_t/t ≥ a) from I(a) for an integer count
    """
    theta = rate_fn_derivative(params, threshold)
    variance = 1 / rate_fn_curvature(params, threshold)
    return log(-expm1(-abs(theta)) * sqrt(2 * pi * t * variance)) / t


@dataclass(frozen=True)
class RareEventEstimate:
    """
    importance-sampling estimate of P(N_t/t ≥ a) (or ≤ a)
    ----------
    Arguments:
        - threshold: float
        - horizon: float
        - p_hat: float
            weighted mean of the indicator, in [0, 1]
        - rate_hat: float
            −(1/t)·log p_hat, +∞ when p_hat = 0
        - std_err: float
            standard error of p_hat
        - ess: float
            (Σw)²/Σw² over the weights of the paths in the event
        - proposal: str
            label of the sampling law
    """

    threshold: float
    horizon: float
    p_hat: float
    rate_hat: float
    std_err: float
    ess: float
    proposal: str
    tail: Tail = Tail.UPPER
    replicas: int = 0
    rate_std_err: float = inf
    reliable: bool = True
    i_explicit: Optional[float] = None
    relative_gap: Optional[float] = None
    rate_corrected: Optional[float] = None

    def as_record(self) -> dict:
        return {
            "threshold": self.threshold,
            "horizon": self.horizon,
            "tail": self.tail.name.lower(),
            "p_hat": self.p_hat,
            "rate_hat": self.rate_hat,
            "std_err": self.std_err,
            "rate_std_err": self.rate_std_err,
            "ess": self.ess,
            "replicas": self.replicas,
            "proposal": self.proposal,
            "reliable": self.reliable,
            "I_explicit": self.i_explicit,
            "relative_gap": self.relative_gap,
            "rate_corrected": self.rate_corrected,
        }


def _in_event(count: int, horizon: float, threshold: float, tail: Tail) -> bool:
    if tail == Tail.UPPER:
        return count / horizon >= threshold
    return count / horizon <= threshold


def _rare_event_replica(model, proposal, threshold, tail, cfg, index, rng):
    path = simulate_path(proposal, cfg, rng=rng)
    if not _in_event(len(path), cfg.horizon, threshold, tail):
        return 0.0
    if proposal is model:
        return 1.0
    return exp(-girsanov_log_ratio(proposal, model, path).log_ratio)


def rare_event_probability(
    model: IntensityModel,
    threshold: float,
    horizon: float,
    proposal: IntensityModel,
    cfg: SimConfig,
    tail: Tail = Tail.UPPER,
) -> RareEventEstimate:
    """
    estimate P(N_t/t ≥ a) under `model` from paths of `proposal`, each
    weighted by dP/dQ = exp(−log dQ/dP)
    ----------
    Arguments:
        - model: IntensityModel
            the law whose tail is wanted, rate.lower_bound > 0
        - threshold: float
            the level a
        - horizon: float
            the time t
        - proposal: IntensityModel
            the sampling law
        - cfg: SimConfig
            seed and replica count (cfg.horizon is replaced by `horizon`)
        - tail: Tail
            UPPER for {N_t/t ≥ a}, LOWER for {N_t/t ≤ a}
    Returns:
        - RareEventEstimate"""
    run = replace(cfg, horizon=horizon)
    values = np.array(
        map_replicas(
            partial(_rare_event_replica, model, proposal, threshold, tail, run), run
        )
    )
    n = len(values)
    p_hat = float(values.mean())
    std_err = float(values.std(ddof=1) / sqrt(n)) if n > 1 else 0.0
    total = values.sum()
    ess = float(total**2 / np.sum(values**2)) if total > 0 else 0.0
    if p_hat > 1:
        logger.warning("p_hat = %g above 1, clipped", p_hat)
        p_hat = 1.0
    rate_hat = -log(p_hat) / horizon + 0.0 if p_hat > 0 else inf
    rate_std_err = std_err / (p_hat * horizon) if p_hat > 0 else inf
    reliable = ess >= MIN_RELIABLE_ESS
    if not reliable:
        logger.warning(
            "unreliable estimate at a = %g, t = %g: ESS %.1f < %d",
            threshold,
            horizon,
            ess,
            MIN_RELIABLE_ESS,
        )

    i_explicit = relative_gap = rate_corrected = None
    if model.is_linear and model.rate.nu > 0:
        params = model.linear_params()
        _, i_explicit = rate_fn_minimum(params, threshold, tail)
        if i_explicit > 0 and isfinite(i_explicit):
            relative_gap = (rate_hat - i_explicit) / i_explicit
            if p_hat > 0:
                rate_corrected = rate_hat - bahadur_rao_correction(
                    params, threshold, horizon
                )

    estimate = RareEventEstimate(
        threshold=threshold,
        horizon=horizon,
        p_hat=p_hat,
        rate_hat=rate_hat,
        std_err=std_err,
        ess=ess,
        proposal=proposal.label,
        tail=tail,
        replicas=n,
        rate_std_err=rate_std_err,
        reliable=reliable,
        i_explicit=i_explicit,
        relative_gap=relative_gap,
        rate_corrected=rate_corrected,
    )
    logger.info(
        "P(N_t/t %s %g) at t = %g: %.4g ± %.2g, rate %.5g (ESS %.0f)",
        ">=" if tail == Tail.UPPER else "<=",
        threshold,
        horizon,
        p_hat,
        std_err,
        rate_hat,
        ess,
    )
    return estimate


def horizon_ladder(
    model: IntensityModel,
    threshold: float,
    cfg: SimConfig,
    horizons: Sequence[float] = (50.0, 100.0, 200.0),
    proposal: Optional[IntensityModel] = None,
    tail: Tail = Tail.UPPER,
) -> list:
    """
    rare_event_probability along increasing horizons, to expose how fast
    rate_hat approaches its t → ∞ limit
    """
    proposal = proposal or mean_matched_proposal(model, threshold)
    ladder = [
        rare_event_probability(model, threshold, t, proposal, cfg, tail)
        for t in horizons
    ]
    for rung in ladder:
        if rung.i_explicit is not None:
            logger.info(
                "t = %g: |rate_hat - I| = %.5g", rung.horizon, abs(rung.rate_hat - rung.i_explicit)
            )
    return ladder


def _count(offsets: np.ndarray) -> float:
    return float(len(offsets))


def _at_least(level, offsets):
    return float(len(offsets) >= level)


def _truncated_count(level, offsets):
    return float(len(offsets)) if len(offsets) >= level else 0.0


def _mean_gap(offsets):
    return float(np.mean(np.diff(offsets))) if len(offsets) > 1 else 0.0


def _min_gap(offsets):
    return float(np.min(np.diff(offsets))) if len(offsets) > 1 else 0.0


@dataclass(frozen=True)
class WindowFunctional:
    """
    a function of the event pattern in a window [0, L]: the evaluator
    receives the sorted offsets of the events in the window
    ----------
    Arguments:
        - window_length: float
            L > 0
        - evaluator: Callable[[np.ndarray], float]
        - name: str
        - windows: tuple[float, ...]
            every window edge the evaluator depends on; defaults to (L,)
    """

    window_length: float
    evaluator: Callable
    name: str = "custom"
    windows: tuple = field(default=())

    def __post_init__(self):
        if self.window_length <= 0:
            raise ValueError(f"window_length must be positive, got {self.window_length}")
        if not self.windows:
            object.__setattr__(self, "windows", (self.window_length,))

    def __call__(self, offsets: np.ndarray) -> float:
        return self.evaluator(offsets)

    def __add__(self, other: "WindowFunctional") -> "WindowFunctional":
        def evaluator(offsets):
            return self(offsets[offsets <= self.window_length]) + other(
                offsets[offsets <= other.window_length]
            )

        return WindowFunctional(
            max(self.window_length, other.window_length),
            evaluator,
            f"{self.name}+{other.name}",
            tuple(sorted(set(self.windows + other.windows))),
        )

    @classmethod
    def count(cls, window_length: float) -> "WindowFunctional":
        """N[0, L]"""
        return cls(window_length, _count, "count")

    @classmethod
    def at_least(cls, window_length: float, level: int) -> "WindowFunctional":
        """1{N[0, L] ≥ m}"""
        return cls(window_length, partial(_at_least, level), f"at_least({level})")

    @classmethod
    def truncated_count(cls, window_length: float, level: int) -> "WindowFunctional":
        """N[0, L]·1{N[0, L] ≥ ℓ}"""
        return cls(
            window_length, partial(_truncated_count, level), f"truncated_count({level})"
        )

    @classmethod
    def mean_gap(cls, window_length: float) -> "WindowFunctional":
        return cls(window_length, _mean_gap, "mean_gap")

    @classmethod
    def min_gap(cls, window_length: float) -> "WindowFunctional":
        return cls(window_length, _min_gap, "min_gap")


def empirical_functional(stream: EventStream, f: WindowFunctional) -> float:
    """
    (1/t)∫₀ᵗ f(θ_s ω_t) ds for the periodized path ω_t(s + t) = ω_t(s).
    The window content only changes when an edge crosses an event, so the
    integrand is piecewise constant with breakpoints {τ_i} and {τ_i − L}
    (mod t) and the integral is an exact finite sum.
    """
    t = stream.horizon
    length = f.window_length
    if t < length:
        raise ValueError(f"horizon {t} shorter than the window {length}")
    times = stream.times
    if len(times) == 0:
        return f(np.empty(0))
    periodic = np.concatenate([times, times + t])
    cuts = [np.array([0.0, t]), np.mod(times, t)]
    cuts += [np.mod(times - window, t) for window in f.windows]
    edges = np.unique(np.concatenate(cuts))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid = (a + b) / 2
        lo = np.searchsorted(periodic, mid, side="left")
        hi = np.searchsorted(periodic, mid + length, side="right")
        total += f(periodic[lo:hi] - mid) * (b - a)
    return total / t


def sandwich_bounds(stream: EventStream) -> tuple:
    """
    N_t/t ∓ (N[t − 1, t] + N[0, 1])/t, the bounds that pin
    ∫N[0, 1] dR_{t,ω} to N_t/t
    """
    t = stream.horizon
    times = stream.times
    last = len(times) - np.searchsorted(times, t - 1, side="left")
    first = np.searchsorted(times, 1.0, side="right")
    slack = (last + first) / t
    mean = len(times) / t
    return mean - slack, mean + slack


class LLNEstimate(NamedTuple):
    mean_rate: float
    std_err: float


def lln_estimate(model: IntensityModel, cfg: SimConfig) -> LLNEstimate:
    """
    replica average of N_T/T with its standard error; paths are burned in
    over cfg.burn_in_for(model), so burn_in=None means the default of 20
    relaxation times and burn_in=0 an empty start
    """
    burned = cfg.burn_in_for(model) > 0
    paths = simulate_replicas(model, cfg, burned=burned)
    rates = np.array([len(path) / cfg.horizon for path in paths])
    n = len(rates)
    estimate = LLNEstimate(
        float(rates.mean()), float(rates.std(ddof=1) / sqrt(n)) if n > 1 else 0.0
    )
    logger.info(
        "%s: N_T/T = %.5g ± %.2g over %d replicas (%s start)",
        model.label,
        estimate.mean_rate,
        estimate.std_err,
        n,
        "burned-in" if burned else "empty",
    )
    return estimate


if __name__ == "__main__":
    params = LinearRateParams(nu=1.0, hnorm=0.5)
    for x in (0.0, 1.0, 2.0, 3.0):
        print(f"I({x}) = {linear_rate_fn(params, x):.7f}")
    print(f"x* over {{x >= 3}}: {rate_fn_minimum(params, 3.0)}")
