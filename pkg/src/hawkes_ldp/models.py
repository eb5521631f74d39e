"""
Exciting kernels h, rate functions λ and the (h, λ) pairs that define a
Hawkes path law. Everything here is immutable once constructed, so models
can be shared freely between replicas, threads and worker processes.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum, auto
from math import exp, expm1, inf, log, log1p

import numpy as np
from scipy.special import exp1

logger = logging.getLogger(__name__)

__all__ = [
    "KernelShape",
    "Interpolation",
    "RateShape",
    "Kernel",
    "ExponentialKernel",
    "PowerLawKernel",
    "TableKernel",
    "RateFn",
    "LinearRate",
    "SaturatingRate",
    "ClippedLinearRate",
    "IntensityModel",
    "poisson_model",
    "kernel_eval",
    "kernel_l1",
    "kernel_tail",
    "rate_eval",
    "CUTOFF_TOLERANCE",
    "RELAXATION_TAIL",
]

# kernel_tail(eval_cutoff) <= CUTOFF_TOLERANCE * l1_norm
CUTOFF_TOLERANCE = 1e-12
# kernel_tail(relaxation_time) = RELAXATION_TAIL * l1_norm for a power law
RELAXATION_TAIL = 1e-3


class KernelShape(Enum):
    EXPONENTIAL = auto()
    POWER_LAW = auto()
    TABLE = auto()


class Interpolation(Enum):
    STEP = auto()
    LINEAR = auto()


class RateShape(Enum):
    LINEAR = auto()
    SATURATING = auto()
    CLIPPED_LINEAR = auto()


class Kernel:
    """
    the exciting function h: non-negative, non-increasing and integrable on
    [0, ∞), zero on (−∞, 0). Calling a kernel evaluates it pointwise and
    accepts floats or numpy arrays.
    """

    shape: KernelShape
    compact_support: bool = False

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        values = np.where(
            (t >= 0) & (t <= self.eval_cutoff), self._profile(np.maximum(t, 0.0)), 0.0
        )
        return values if values.ndim else float(values)

    def _profile(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def l1_norm(self) -> float:
        raise NotImplementedError

    def tail(self, t: float) -> float:
        raise NotImplementedError

    @property
    def eval_cutoff(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialKernel(Kernel):
    """h(t) = amplitude · e^{−βt}"""

    amplitude: float
    beta: float
    shape: KernelShape = field(default=KernelShape.EXPONENTIAL, init=False)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("Exponential kernel requires amplitude >= 0")
        if self.beta <= 0:
            raise ValueError("Exponential kernel requires beta > 0")

    def _profile(self, t):
        return self.amplitude * np.exp(-self.beta * t)

    @property
    def l1_norm(self) -> float:
        return self.amplitude / self.beta

    def tail(self, t: float) -> float:
        if t <= 0:
            return self.l1_norm
        return self.l1_norm * exp(-self.beta * t)

    @property
    def eval_cutoff(self) -> float:
        if self.amplitude == 0:
            return 0.0
        return -log(CUTOFF_TOLERANCE) / self.beta


@dataclass(frozen=True)
class PowerLawKernel(Kernel):
    """h(t) = amplitude · (c + t)^{−p}, p > 1"""

    amplitude: float
    c: float
    p: float
    shape: KernelShape = field(default=KernelShape.POWER_LAW, init=False)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("PowerLaw kernel requires amplitude >= 0")
        if self.c <= 0:
            raise ValueError("PowerLaw kernel requires c > 0")
        if self.p <= 1:
            raise ValueError("PowerLaw kernel requires p > 1 (integrability)")

    def _profile(self, t):
        return self.amplitude * (self.c + t) ** (-self.p)

    @property
    def l1_norm(self) -> float:
        return self.amplitude * self.c ** (1 - self.p) / (self.p - 1)

    def tail(self, t: float) -> float:
        t = max(t, 0.0)
        return self.amplitude * (self.c + t) ** (1 - self.p) / (self.p - 1)

    @property
    def eval_cutoff(self) -> float:
        if self.amplitude == 0:
            return 0.0
        # (c + T)^{1-p} = tol · c^{1-p}
        return self.c * expm1(-log(CUTOFF_TOLERANCE) / (self.p - 1))


@dataclass(frozen=True)
class TableKernel(Kernel):
    """
    a tabulated kernel on [knots[0].t, knots[-1].t] = [0, support end].
    STEP interpolation is right-continuous (value v_i on [t_i, t_{i+1})),
    LINEAR interpolation joins the knots. h vanishes past the last knot.
    ----------
    Arguments:
        - knots: tuple[tuple[float, float], ...]
            (time, value) pairs, times strictly increasing from 0, values
            non-negative and non-increasing
        - interpolation: Interpolation
            STEP or LINEAR
    """

    knots: tuple
    interpolation: Interpolation = Interpolation.STEP
    shape: KernelShape = field(default=KernelShape.TABLE, init=False)
    compact_support: bool = field(default=True, init=False)

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 2:
            raise ValueError("Table kernel needs at least two knots")
        times = np.array([k[0] for k in knots])
        values = np.array([k[1] for k in knots])
        if times[0] != 0.0:
            raise ValueError("Table kernel must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Table kernel knot times must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("Table kernel values must be non-negative")
        if np.any(np.diff(values) > 0):
            raise ValueError("Table kernel values must be non-increasing")

    @property
    def _times(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def _values(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    def _profile(self, t):
        times, values = self._times, self._values
        if self.interpolation == Interpolation.LINEAR:
            return np.interp(t, times, values)
        idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
        return values[idx]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        end = self.eval_cutoff
        inside = (t >= 0) & (t < end)
        if self.interpolation == Interpolation.LINEAR:
            inside = (t >= 0) & (t <= end)
        values = np.where(inside, self._profile(np.clip(t, 0.0, end)), 0.0)
        return values if values.ndim else float(values)

    def _segment_areas(self) -> np.ndarray:
        times, values = self._times, self._values
        widths = np.diff(times)
        if self.interpolation == Interpolation.LINEAR:
            return widths * (values[:-1] + values[1:]) / 2
        return widths * values[:-1]

    @property
    def l1_norm(self) -> float:
        return float(self._segment_areas().sum())

    def tail(self, t: float) -> float:
        times, values = self._times, self._values
        if t <= 0:
            return self.l1_norm
        if t >= times[-1]:
            return 0.0
        i = int(np.searchsorted(times, t, side="right") - 1)
        after = float(self._segment_areas()[i + 1 :].sum())
        right = times[i + 1]
        if self.interpolation == Interpolation.LINEAR:
            here = float(np.interp(t, times, values))
            return after + (right - t) * (here + values[i + 1]) / 2
        return after + (right - t) * values[i]

    @property
    def eval_cutoff(self) -> float:
        return self.knots[-1][0]


class RateFn:
    """
    the rate function λ: [0, ∞) → [0, ∞), non-decreasing and Lipschitz.
    Calling a rate function evaluates it on floats or numpy arrays without
    validation; use rate_eval for the checked entry point.
    """

    shape: RateShape
    nu: float
    lower_bound: float = None

    def __call__(self, z):
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    @property
    def sublinear(self) -> bool:
        return True

    def _check_lower_bound(self):
        at_zero = float(self(0.0))
        if self.lower_bound is None:
            object.__setattr__(self, "lower_bound", at_zero)
        elif not 0 <= self.lower_bound <= at_zero:
            raise ValueError(
                f"lower_bound must lie in [0, λ(0)] = [0, {at_zero}], got {self.lower_bound}"
            )

    def decay_integral(self, z0: float, beta: float, dt: float) -> float:
        """∫₀^dt λ(z0·e^{−βs}) ds, the compensator increment between two
        events of an exponential kernel"""
        raise NotImplementedError


@dataclass(frozen=True)
class LinearRate(RateFn):
    """λ(z) = ν + slope·z. Not sublinear when slope > 0."""

    nu: float
    slope: float = 1.0
    lower_bound: float = None
    shape: RateShape = field(default=RateShape.LINEAR, init=False)

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("Linear rate requires nu >= 0")
        if self.slope < 0:
            raise ValueError("Linear rate requires slope >= 0")
        self._check_lower_bound()

    def __call__(self, z):
        return self.nu + self.slope * z

    @property
    def lipschitz(self) -> float:
        return self.slope

    @property
    def sublinear(self) -> bool:
        return self.slope == 0

    def decay_integral(self, z0, beta, dt):
        return self.nu * dt - self.slope * z0 * expm1(-beta * dt) / beta


@dataclass(frozen=True)
class SaturatingRate(RateFn):
    """λ(z) = ν + (cap − ν)(1 − e^{−z/scale})"""

    nu: float
    cap: float
    scale: float
    lower_bound: float = None
    shape: RateShape = field(default=RateShape.SATURATING, init=False)

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("Saturating rate requires nu >= 0")
        if self.cap <= self.nu:
            raise ValueError("Saturating rate requires cap > nu")
        if self.scale <= 0:
            raise ValueError("Saturating rate requires scale > 0")
        self._check_lower_bound()

    def __call__(self, z):
        return self.nu - (self.cap - self.nu) * np.expm1(-np.asarray(z) / self.scale)

    @property
    def lipschitz(self) -> float:
        return (self.cap - self.nu) / self.scale

    def decay_integral(self, z0, beta, dt):
        # ∫ e^{−c e^{−βs}} ds = (E1(c e^{−βdt}) − E1(c)) / β
        c = z0 / self.scale
        if c == 0:
            return self.nu * dt
        saturated = (exp1(c * exp(-beta * dt)) - exp1(c)) / beta
        return self.cap * dt - (self.cap - self.nu) * float(saturated)


@dataclass(frozen=True)
class ClippedLinearRate(RateFn):
    """λ(z) = min(ν + z, cap)"""

    nu: float
    cap: float
    lower_bound: float = None
    shape: RateShape = field(default=RateShape.CLIPPED_LINEAR, init=False)

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("ClippedLinear rate requires nu >= 0")
        if self.cap < self.nu:
            raise ValueError("ClippedLinear rate requires cap >= nu")
        self._check_lower_bound()

    def __call__(self, z):
        if isinstance(z, np.ndarray):
            return np.minimum(self.nu + z, self.cap)
        return min(self.nu + z, self.cap)

    @property
    def lipschitz(self) -> float:
        return 1.0 if self.cap > self.nu else 0.0

    def decay_integral(self, z0, beta, dt):
        room = self.cap - self.nu
        if room == 0:
            return self.nu * dt
        if z0 <= room:
            return self.nu * dt - z0 * expm1(-beta * dt) / beta
        # clipped until ν + z0·e^{−βs} falls to cap
        clipped = min(log(z0 / room) / beta, dt)
        rest = dt - clipped
        z_start = min(z0 * exp(-beta * clipped), room)
        return self.cap * clipped + self.nu * rest - z_start * expm1(-beta * rest) / beta


@dataclass(frozen=True)
class IntensityModel:
    """
    a (kernel, rate) pair: the Hawkes law with intensity
    λ(Σ_{τ<t} h(t − τ)).
    ----------
    Arguments:
        - kernel: Kernel
            the exciting function h
        - rate: RateFn
            the rate function λ
        - label: str
            short name used in logs and result records
    """

    kernel: Kernel
    rate: RateFn
    label: str = "model"

    def __post_init__(self):
        if self.is_linear and self.rate.slope > 0:
            hnorm = self.rate.slope * self.kernel.l1_norm
            if hnorm >= 1:
                raise ValueError(
                    f"supercritical: slope·‖h‖ = {hnorm:g} >= 1 (explosion regime)"
                )

    @property
    def is_linear(self) -> bool:
        return self.rate.shape == RateShape.LINEAR

    @property
    def is_poisson(self) -> bool:
        """the intensity never depends on the history"""
        return self.kernel.l1_norm == 0 or self.rate.lipschitz == 0

    @property
    def lln_mean(self):
        if not self.is_linear:
            return None
        return self.rate.nu / (1 - self.rate.slope * self.kernel.l1_norm)

    def linear_params(self):
        from hawkes_ldp.ldp import LinearRateParams

        if not self.is_linear:
            raise ValueError(f"{self.label}: explicit rate function needs a linear rate")
        return LinearRateParams(
            nu=self.rate.nu, hnorm=self.rate.slope * self.kernel.l1_norm
        )

    @property
    def relaxation_time(self) -> float:
        """
        1/β for an exponential kernel, else the length past which at most
        RELAXATION_TAIL of the kernel mass remains (the support for a table
        kernel)
        """
        kernel = self.kernel
        if kernel.l1_norm == 0:
            return 0.0
        if kernel.shape == KernelShape.EXPONENTIAL:
            return 1 / kernel.beta
        if kernel.shape == KernelShape.POWER_LAW:
            return kernel.c * expm1(-log(RELAXATION_TAIL) / (kernel.p - 1))
        return kernel.eval_cutoff


def poisson_model(rate: float, label: str = None) -> IntensityModel:
    """a homogeneous Poisson law written as a Hawkes model with h ≡ 0"""
    return IntensityModel(
        kernel=ExponentialKernel(amplitude=0.0, beta=1.0),
        rate=LinearRate(nu=rate, slope=0.0),
        label=label or f"poisson({rate:g})",
    )


def kernel_eval(k: Kernel, t: float) -> float:
    return k(t)


def kernel_l1(k: Kernel) -> float:
    """‖h‖_{L¹}, closed form per shape"""
    return k.l1_norm


def kernel_tail(k: Kernel, t: float) -> float:
    """
    ∫_t^∞ h(s) ds
    ----------
    Arguments:
        - k: Kernel
        - t: float
            a duration t >= 0
    """
    if t == inf:
        return 0.0
    return k.tail(t)


def rate_eval(r: RateFn, z: float) -> float:
    if z < 0:
        raise ValueError(f"rate functions are defined on z >= 0, got {z}")
    return float(r(z))


if __name__ == "__main__":
    model = IntensityModel(ExponentialKernel(1.0, 2.0), LinearRate(1.0), "demo")
    print(f"‖h‖ = {kernel_l1(model.kernel)}, μ = {model.lln_mean}")
    print(f"h(0.5) = {kernel_eval(model.kernel, 0.5):.7f}")
    print(f"λ(1) saturating = {rate_eval(SaturatingRate(1, 3, 1), 1.0):.7f}")
