"""Gaussian reference diffusions used to stabilize path estimators.

The reference starts from a Gaussian and is driven by an affine forward drift, so
every marginal stays Gaussian and is available in closed form.
"""

from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from crepe.core.paths import Direction
from crepe.diffusion.gaussian import LOG_2PI, SdeProcess
from crepe.diffusion.schedules import NoiseSchedule
from crepe.errors import UnsupportedReferenceError

Coefficient = float | Callable[[float], float]


@dataclass(frozen=True)
class AffineDrift:
    """The drift ``f(x, t) = slope(t) * x + offset(t)`` with scalar coefficients."""

    slope: Coefficient = 0.0
    offset: Coefficient = 0.0

    @property
    def time_homogeneous(self) -> bool:
        return not callable(self.slope) and not callable(self.offset)

    def slope_at(self, t):
        return self.slope(t) if callable(self.slope) else self.slope

    def offset_at(self, t):
        return self.offset(t) if callable(self.offset) else self.offset

    def __call__(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        if self.time_homogeneous:
            return self.slope * x + self.offset

        slope = np.vectorize(self.slope_at)(t)
        offset = np.vectorize(self.offset_at)(t)

        return slope[:, None] * x + offset[:, None]


@dataclass(frozen=True, eq=False)
class ReferenceProcess:
    gamma0_mean: np.ndarray
    """The mean of the starting Gaussian, usually moment-matched to the data."""

    gamma0_var: float
    """The isotropic variance of the starting Gaussian."""

    drift: AffineDrift
    """The forward drift ``f_t``."""

    schedule: NoiseSchedule
    """The diffusion coefficient shared with the processes being stabilized."""

    t_start: float = 0.0
    """The time ``gamma0`` is attached to."""

    def __post_init__(self):
        if self.gamma0_var <= 0:
            raise ValueError("The reference variance must be positive")

        object.__setattr__(self, "gamma0_mean", np.asarray(self.gamma0_mean, dtype=float))

    def marginal(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Return the mean and variance of ``gamma_t``."""
        return propagate_reference(self, self.drift, t)

    def log_density(self, x: np.ndarray, t) -> np.ndarray:
        """Return ``log gamma_t(x)`` for a batch of states."""
        mean, var = self.marginal(t)
        mean = np.broadcast_to(mean, x.shape)
        var = np.broadcast_to(var, x.shape[:1])
        dim = x.shape[-1]

        return -0.5 * dim * (LOG_2PI + np.log(var)) - np.sum((x - mean) ** 2, axis=1) / (
            2.0 * var
        )

    def score(self, x: np.ndarray, t) -> np.ndarray:
        mean, var = self.marginal(t)

        return (np.broadcast_to(mean, x.shape) - x) / np.broadcast_to(var, x.shape[:1])[
            :, None
        ]

    def backward_drift(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """``h_t = f_t - sigma_t^2 grad log gamma_t``."""
        sigma2 = self.schedule.sigma(t) ** 2

        return self.drift(x, t) - sigma2[:, None] * self.score(x, t)

    @cached_property
    def _forward(self) -> SdeProcess:
        return SdeProcess(self.drift, self.schedule.sigma, Direction.FORWARD, "reference")

    @cached_property
    def _backward(self) -> SdeProcess:
        return SdeProcess(
            self.backward_drift,
            self.schedule.sigma,
            Direction.BACKWARD,
            "reference",
        )

    def forward_process(self) -> SdeProcess:
        return self._forward

    def backward_process(self) -> SdeProcess:
        return self._backward


def _moment_ode(drift: AffineDrift, schedule: NoiseSchedule):
    def rhs(t, y):
        slope = drift.slope_at(t)
        mean, var = y[:-1], y[-1]

        return np.append(
            slope * mean + drift.offset_at(t),
            2.0 * slope * var + float(schedule.sigma(t)) ** 2,
        )

    return rhs


def _propagate_numerically(ref: ReferenceProcess, drift: AffineDrift, t: float):
    if t == ref.t_start:
        return ref.gamma0_mean, ref.gamma0_var

    solution = integrate.solve_ivp(
        _moment_ode(drift, ref.schedule),
        (ref.t_start, t),
        np.append(ref.gamma0_mean, ref.gamma0_var),
        rtol=1e-10,
        atol=1e-12,
    )

    return solution.y[:-1, -1], solution.y[-1, -1]


def _accumulated_variance(ref: ReferenceProcess, slope: float, t: float) -> float:
    """``int_{t_start}^t exp(2 slope (t - s)) sigma_s^2 ds``."""
    value, _ = integrate.quad(
        lambda s: np.exp(2.0 * slope * (t - s)) * float(ref.schedule.sigma(s)) ** 2,
        ref.t_start,
        t,
        epsabs=1e-13,
        epsrel=1e-12,
    )

    return value


def propagate_reference(
    ref: ReferenceProcess,
    f: AffineDrift,
    t,
) -> tuple[np.ndarray, np.ndarray]:
    """Return the mean and isotropic variance of the reference marginal at ``t``.

    Zero-slope drifts use the schedule's accumulated variance in closed form,
    constant slopes with a constant coefficient use the Ornstein-Uhlenbeck solution,
    and everything else integrates the moment ODEs.

    :param ref: the reference process
    :param f: the affine forward drift
    :param t: a time or an array of times
    :return: means with shape ``(*t.shape, dim)`` and variances with shape ``t.shape``
    """
    if not isinstance(f, AffineDrift):
        raise UnsupportedReferenceError(
            "Closed-form reference marginals need an affine forward drift",
        )

    t = np.asarray(t, dtype=float)
    span = t - ref.t_start
    m0, v0 = ref.gamma0_mean, ref.gamma0_var

    if f.time_homogeneous:
        slope, offset = float(f.slope), float(f.offset)

        if slope == 0.0:
            mean = m0 + (offset * span)[..., None]
            var = v0 + ref.schedule.variance(t) - ref.schedule.variance(ref.t_start)

            return mean, var

        decay = np.exp(slope * span)
        mean = decay[..., None] * m0 + (offset * (decay - 1.0) / slope)[..., None]

        if ref.schedule.constant is not None:
            sigma2 = ref.schedule.constant**2
            var = v0 * decay**2 + sigma2 * (decay**2 - 1.0) / (2.0 * slope)
        else:
            var = v0 * decay**2 + np.vectorize(
                lambda u: _accumulated_variance(ref, slope, u),
            )(t)

        return mean, var

    flat = [_propagate_numerically(ref, f, float(u)) for u in t.ravel()]

    mean = np.array([m for m, _ in flat]).reshape((*t.shape, m0.size))
    var = np.array([v for _, v in flat]).reshape(t.shape)

    return mean, var
