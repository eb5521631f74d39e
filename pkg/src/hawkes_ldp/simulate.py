"""
Exact simulation of (non)linear Hawkes paths by thinning.

Between events the excitation Z_s = Σ h(s − τ) can only decay (h is
non-increasing) and λ is non-decreasing, so λ evaluated at the current Z
dominates the intensity until the next accepted event. The dominating rate
is re-anchored after every candidate, which makes the thinning exact
without any envelope parameter.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum, auto
from functools import partial
from math import exp
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from hawkes_ldp.models import IntensityModel, Kernel, KernelShape, RateFn

logger = logging.getLogger(__name__)

__all__ = [
    "Start",
    "ExplosionError",
    "EventStream",
    "SimConfig",
    "ExponentialExcitation",
    "DirectExcitation",
    "make_excitation",
    "excitation_at",
    "intensity_at",
    "simulate_path",
    "burn_in_stationarize",
    "simulate_replicas",
    "replica_generators",
    "replica_seed_sequences",
    "map_replicas",
    "DEFAULT_MAX_EVENTS",
    "BURN_IN_RELAXATION_TIMES",
]

DEFAULT_MAX_EVENTS = 10**7
BURN_IN_RELAXATION_TIMES = 20


class Start(Enum):
    """how the configuration before time 0 was obtained"""

    EMPTY = auto()
    HISTORY = auto()
    BURN_IN = auto()


class ExplosionError(RuntimeError):
    pass


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float).ravel()
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EventStream:
    """
    a finite realization: event times in (0, horizon] plus the past
    configuration in (−∞, 0]
    ----------
    Arguments:
        - horizon: float
            the observation window length T > 0
        - times: array of float
            strictly increasing event times in (0, T]
        - history: array of float
            strictly increasing event times in (−∞, 0]
        - start: Start
            how the history was produced
    """

    horizon: float
    times: np.ndarray
    history: np.ndarray = field(default_factory=lambda: _frozen_array([]))
    start: Start = Start.EMPTY

    def __post_init__(self):
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "times", _frozen_array(self.times))
        object.__setattr__(self, "history", _frozen_array(self.history))
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        for name, values in (("times", self.times), ("history", self.history)):
            if np.any(np.diff(values) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if len(self.times) and (self.times[0] <= 0 or self.times[-1] > self.horizon):
            raise ValueError("event times must lie in (0, horizon]")
        if len(self.history) and self.history[-1] > 0:
            raise ValueError("history times must be <= 0")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def all_events(self) -> np.ndarray:
        return np.concatenate([self.history, self.times])

    def count(self, a: float, b: float) -> int:
        """N(a, b], history included"""
        events = self.all_events
        return int(
            np.searchsorted(events, b, side="right")
            - np.searchsorted(events, a, side="right")
        )

    def count_closed(self, a: float, b: float) -> int:
        """N[a, b], history included"""
        events = self.all_events
        return int(
            np.searchsorted(events, b, side="right")
            - np.searchsorted(events, a, side="left")
        )

    def as_history(self) -> np.ndarray:
        """every event of this stream, shifted so the stream ends at time 0"""
        return self.all_events - self.horizon

    def split(self, at: float) -> tuple:
        """
        cut the stream at time `at`: the first piece covers [0, at], the
        second covers [at, T] re-based to [0, T − at] and carries everything
        up to `at` as its history
        """
        if not 0 < at < self.horizon:
            raise ValueError(f"split point must lie in (0, {self.horizon})")
        first = EventStream(at, self.times[self.times <= at], self.history, self.start)
        past = self.all_events
        second = EventStream(
            self.horizon - at,
            self.times[self.times > at] - at,
            past[past <= at] - at,
            Start.HISTORY,
        )
        return first, second


@dataclass(frozen=True)
class SimConfig:
    """
    simulation settings shared by every replica
    ----------
    Arguments:
        - seed: int
            root seed, each replica draws from its own child stream
        - horizon: float
            the window length T
        - burn_in: float
            warm-up length before time 0; None means 20 relaxation times of
            the simulated model
        - replicas: int
            number of independent paths
        - max_events: int
            explosion guard, abort a path past this many events
        - workers: int
            worker processes for replica fan-out (1 runs in-process)
    """

    seed: int = 0
    horizon: float = 100.0
    burn_in: Optional[float] = None
    replicas: int = 1
    max_events: int = DEFAULT_MAX_EVENTS
    workers: int = 1

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def burn_in_for(self, model: IntensityModel) -> float:
        if self.burn_in is not None:
            return self.burn_in
        return BURN_IN_RELAXATION_TIMES * model.relaxation_time


class ExponentialExcitation:
    """
    O(1) excitation state for h(t) = a·e^{−βt}: Z decays from its value
    right after the last event, Z(t) = Z(t_k⁺)·e^{−β(t − t_k)}
    """

    def __init__(self, kernel: Kernel, history: np.ndarray):
        self.amplitude = kernel.amplitude
        self.beta = kernel.beta
        self.t_ref = 0.0
        self.z_ref = float(np.sum(kernel(-np.asarray(history)))) if len(history) else 0.0

    def at(self, t: float) -> float:
        return self.z_ref * exp(-self.beta * (t - self.t_ref))

    right_limit = at

    def push(self, t: float):
        self.z_ref = self.at(t) + self.amplitude
        self.t_ref = t

    def profile(self, start: float) -> Callable:
        z_ref, t_ref, beta = self.z_ref, self.t_ref, self.beta
        return lambda s: z_ref * np.exp(-beta * (s - t_ref))

    def breakpoints(self, start: float, end: float) -> list:
        return []

    def integrate(self, rate: RateFn, start: float, end: float) -> float:
        return rate.decay_integral(self.at(start), self.beta, end - start)


class DirectExcitation:
    """excitation by direct summation over the events within eval_cutoff"""

    def __init__(self, kernel: Kernel, history: np.ndarray):
        self.kernel = kernel
        self.cutoff = kernel.eval_cutoff
        self._buffer = np.empty(max(64, 2 * len(history)))
        self._buffer[: len(history)] = history
        self._n = len(history)
        self._knots = (
            np.array([k[0] for k in kernel.knots])
            if kernel.shape == KernelShape.TABLE
            else None
        )

    def _window(self, t: float, inclusive: bool = False) -> np.ndarray:
        events = self._buffer[: self._n]
        hi = np.searchsorted(events, t, side="right" if inclusive else "left")
        lo = np.searchsorted(events, t - self.cutoff, side="left")
        return events[lo:hi]

    def at(self, t: float) -> float:
        return float(np.sum(self.kernel(t - self._window(t))))

    def right_limit(self, t: float) -> float:
        return float(np.sum(self.kernel(t - self._window(t, inclusive=True))))

    def push(self, t: float):
        if self._n == len(self._buffer):
            self._buffer = np.concatenate([self._buffer, np.empty(len(self._buffer))])
        self._buffer[self._n] = t
        self._n += 1

    def profile(self, start: float) -> Callable:
        events = self._window(start, inclusive=True).copy()
        kernel = self.kernel
        return lambda s: float(np.sum(kernel(s - events)))

    def breakpoints(self, start: float, end: float) -> list:
        """interior points where a table kernel jumps or kinks"""
        if self._knots is None:
            return []
        events = self._window(start, inclusive=True)
        points = (events[:, None] + self._knots[None, :]).ravel()
        return sorted(set(points[(points > start) & (points < end)].tolist()))

    def integrate(self, rate: RateFn, start: float, end: float) -> float:
        z = self.profile(start)
        scale = max(float(rate(z(start))), 1.0)
        points = self.breakpoints(start, end)
        value, _ = quad(
            lambda s: float(rate(z(s))),
            start,
            end,
            points=points or None,
            epsabs=1e-10 * scale * (end - start),
            epsrel=1e-10,
            limit=max(100, 2 * len(points) + 50),
        )
        return value


def make_excitation(
    kernel: Kernel, history: Sequence[float] = (), direct: bool = False
) -> Union[ExponentialExcitation, DirectExcitation]:
    """
    pick the excitation tracker for a kernel: the O(1) recursion when the
    kernel is exponential, direct sums otherwise (or when `direct` is set)
    """
    history = np.asarray(history, dtype=float)
    if kernel.shape == KernelShape.EXPONENTIAL and not direct:
        return ExponentialExcitation(kernel, history)
    return DirectExcitation(kernel, history)


def excitation_at(model: IntensityModel, stream: EventStream, t: float) -> float:
    """Z_t = Σ_{τ < t} h(t − τ) over history and events, strict past"""
    if not 0 <= t <= stream.horizon:
        raise ValueError(f"t must lie in [0, {stream.horizon}], got {t}")
    events = stream.all_events
    past = events[: np.searchsorted(events, t, side="left")]
    return float(np.sum(model.kernel(t - past)))


def intensity_at(model: IntensityModel, stream: EventStream, t: float) -> float:
    """
    the predictable intensity λ(Σ_{τ<t} h(t − τ)); an event at exactly t
    does not count
    """
    return float(model.rate(excitation_at(model, stream, t)))


def _generator(seed_sequence: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64DXSM(seed_sequence))


def replica_seed_sequences(cfg: SimConfig) -> list:
    """the children of SeedSequence(seed), one per replica, in replica order"""
    return np.random.SeedSequence(cfg.seed).spawn(cfg.replicas)


def replica_generators(cfg: SimConfig) -> list:
    """one independent generator per replica, built from replica_seed_sequences"""
    return [_generator(child) for child in replica_seed_sequences(cfg)]


def _as_history(history) -> tuple:
    if history is None:
        return np.empty(0), Start.EMPTY
    if isinstance(history, EventStream):
        return history.as_history(), Start.HISTORY
    past = np.sort(np.asarray(history, dtype=float))
    if len(past) and past[-1] > 0:
        raise ValueError("history times must be <= 0")
    return past, (Start.HISTORY if len(past) else Start.EMPTY)


def _thin(
    model: IntensityModel,
    excitation,
    horizon: float,
    rng: np.random.Generator,
    max_events: int,
) -> list:
    rate = model.rate
    jump = float(model.kernel(0.0))
    accepted = []
    candidates = 0
    s = 0.0
    bound = float(rate(excitation.right_limit(s)))
    while bound > 0:
        s += rng.standard_exponential() / bound
        if s > horizon:
            break
        candidates += 1
        z = excitation.at(s)
        intensity = float(rate(z))
        if rng.random() * bound < intensity:
            excitation.push(s)
            accepted.append(s)
            if len(accepted) > max_events:
                raise ExplosionError(
                    f"{model.label}: more than {max_events} events before t = {s:g}"
                )
            bound = float(rate(z + jump))
        else:
            bound = intensity
    logger.debug(
        "%s: %d events from %d candidates on [0, %g]",
        model.label,
        len(accepted),
        candidates,
        horizon,
    )
    return accepted


def simulate_path(
    model: IntensityModel,
    cfg: SimConfig,
    history: Union[EventStream, Sequence[float], None] = None,
    rng: Optional[np.random.Generator] = None,
) -> EventStream:
    """
    draw one path on [0, cfg.horizon] by exact thinning
    ----------
    Arguments:
        - model: IntensityModel
            the law to sample
        - cfg: SimConfig
            horizon, seed and explosion guard
        - history: EventStream or sequence of float, optional
            the past configuration; an EventStream is taken to end at time 0.
            None samples from the empty-history law.
        - rng: numpy Generator, optional
            defaults to the first replica stream of cfg.seed
    Returns:
        - EventStream: the sampled path"""
    if rng is None:
        rng = _generator(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    past, start = _as_history(history)
    excitation = make_excitation(model.kernel, past)
    times = _thin(model, excitation, cfg.horizon, rng, cfg.max_events)
    return EventStream(cfg.horizon, times, past, start)


def burn_in_stationarize(
    model: IntensityModel, cfg: SimConfig, rng: Optional[np.random.Generator] = None
) -> EventStream:
    """
    approximate a stationary start: simulate on [−burn_in, T] from an empty
    history and keep the pre-0 events as the history of the [0, T] window
    """
    burn_in = cfg.burn_in_for(model)
    path = simulate_path(model, replace(cfg, horizon=cfg.horizon + burn_in), rng=rng)
    if burn_in == 0:
        return path
    events = path.times - burn_in
    times = np.minimum(events[events > 0], cfg.horizon)
    return EventStream(cfg.horizon, times, events[events <= 0], Start.BURN_IN)


def _run_replica(job: tuple):
    task, index, seed_sequence = job
    return task(index, _generator(seed_sequence))


def map_replicas(task: Callable, cfg: SimConfig) -> list:
    """
    run task(index, rng) for every replica and return the results in
    replica order. With cfg.workers > 1 the replicas are spread over worker
    processes, so `task` must be picklable (a module-level function or a
    functools.partial of one).
    """
    children = replica_seed_sequences(cfg)
    jobs = [(task, index, child) for index, child in enumerate(children)]
    if cfg.workers > 1 and cfg.replicas > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            return list(executor.map(_run_replica, jobs))
    return [_run_replica(job) for job in jobs]


def _replica_path(model, cfg, history, burned, index, rng):
    if burned:
        return burn_in_stationarize(model, cfg, rng=rng)
    return simulate_path(model, cfg, history=history, rng=rng)


def simulate_replicas(
    model: IntensityModel,
    cfg: SimConfig,
    history: Union[EventStream, Sequence[float], None] = None,
    burned: bool = False,
) -> list:
    """cfg.replicas independent paths, replica i drawn from child stream i"""
    return map_replicas(partial(_replica_path, model, cfg, history, burned), cfg)


if __name__ == "__main__":
    from hawkes_ldp.models import ExponentialKernel, LinearRate

    demo = IntensityModel(ExponentialKernel(1.0, 2.0), LinearRate(1.0), "demo")
    path = simulate_path(demo, SimConfig(seed=1, horizon=200.0))
    print(f"{len(path)} events, N_T/T = {len(path) / path.horizon:.3f} (μ = 2)")
