"""Terminal rewards, their annealing schedule and Tweedie-lifted intermediate rewards."""

import threading
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import special

from crepe.models.mixture import ContinuousModel
from crepe.models.segments import StitchWeights, chain_points

RewardFn = Callable[[np.ndarray], np.ndarray]


class EvaluationCounter:
    """A thread-safe count of reward evaluations."""

    def __init__(self, value: int = 0):
        self._value = value
        self._lock = threading.Lock()

    def add(self, count: int):
        with self._lock:
            self._value += count

    @property
    def value(self) -> int:
        return self._value


class RewardSpec:
    """A terminal reward ``r_0`` with an optional analytic gradient.

    Every evaluation of the value or the gradient is counted per state.
    """

    def __init__(
        self,
        value: RewardFn,
        gradient: RewardFn | None = None,
        label: str = "",
        counter: EvaluationCounter | None = None,
    ):
        self._value = value
        self._gradient = gradient
        self.label = label
        self.counter = counter or EvaluationCounter()

    @property
    def has_gradient(self) -> bool:
        return self._gradient is not None

    @property
    def evaluations(self) -> int:
        return self.counter.value

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        self.counter.add(x.shape[0])

        return self._value(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self._gradient is None:
            raise ValueError(f"Reward '{self.label}' has no gradient")

        x = np.atleast_2d(x)
        self.counter.add(x.shape[0])

        return self._gradient(x)

    def __add__(self, other: "RewardSpec") -> "RewardSpec":
        """Sum two rewards. The sum shares this reward's evaluation counter."""
        gradient = None

        if self.has_gradient and other.has_gradient:

            def gradient(x):
                return self._gradient(x) + other._gradient(x)

        return RewardSpec(
            lambda x: self._value(x) + other._value(x),
            gradient,
            f"{self.label}+{other.label}",
            self.counter,
        )

    def with_counter(self, counter: EvaluationCounter) -> "RewardSpec":
        """Return the same reward counting into ``counter``."""
        return RewardSpec(self._value, self._gradient, self.label, counter)


def constant_reward(value: float = 0.0) -> RewardSpec:
    return RewardSpec(
        lambda x: np.full(x.shape[0], value),
        np.zeros_like,
        "constant",
    )


def linear_reward(direction, scale: float = 1.0) -> RewardSpec:
    """``r_0(x) = scale * <direction, x>``."""
    direction = np.asarray(direction, dtype=float)

    return RewardSpec(
        lambda x: scale * (x @ direction),
        lambda x: np.broadcast_to(scale * direction, x.shape).copy(),
        "linear",
    )


def quadratic_reward(center, scale: float = 1.0) -> RewardSpec:
    """``r_0(x) = -scale * ||x - center||^2``."""
    center = np.asarray(center, dtype=float)

    return RewardSpec(
        lambda x: -scale * np.sum((x - center) ** 2, axis=1),
        lambda x: -2.0 * scale * (x - center),
        "quadratic",
    )


def _penalty(u: np.ndarray, weights: StitchWeights) -> np.ndarray:
    return weights.l2 * np.sum(u**2, axis=-1) + weights.l1 * np.sum(np.abs(u), axis=-1)


def _penalty_gradient(u: np.ndarray, weights: StitchWeights) -> np.ndarray:
    return 2.0 * weights.l2 * u + weights.l1 * np.sign(u)


def _intermediate_term(flat: np.ndarray, point, weights: StitchWeights):
    """The intermediate penalty and its gradient for points of shape ``(batch, n, 2)``."""
    offset = flat - np.asarray(point, dtype=float)
    cost = _penalty(offset, weights)
    alpha = special.softmax(-weights.temperature * cost, axis=1)
    expected = np.sum(alpha * cost, axis=1)

    d_cost = alpha * (1.0 - weights.temperature * (cost - expected[:, None]))
    grad = weights.intermediate * d_cost[..., None] * _penalty_gradient(offset, weights)

    return -weights.intermediate * expected, -grad


def attention_weights(
    x: np.ndarray,
    segments: int,
    point,
    weights: StitchWeights,
) -> np.ndarray:
    """Softmax attention of every chain point to ``point``.

    :return: shape ``(batch, segments * points)``, summing to one per chain
    """
    pts = chain_points(x, segments).reshape(np.atleast_2d(x).shape[0], -1, 2)
    cost = _penalty(pts - np.asarray(point, dtype=float), weights)

    return special.softmax(-weights.temperature * cost, axis=1)


def stitch_reward(
    x: np.ndarray,
    segments: int,
    origin,
    target,
    weights: StitchWeights,
    intermediate=None,
) -> np.ndarray:
    """The stitching reward of a batch of chains of ``segments`` segments.

    The anchor terms penalize the gap between the first point and ``origin`` and
    between the last point and ``target``. The neighbour terms penalize the gaps
    between consecutive segments, and the optional intermediate term penalizes the
    attention-weighted distance of the chain to ``intermediate``.
    """
    pts = chain_points(x, segments)

    reward = -weights.origin * _penalty(pts[:, 0, 0] - np.asarray(origin), weights)
    reward -= weights.target * _penalty(pts[:, -1, -1] - np.asarray(target), weights)
    reward -= weights.neighbor * _penalty(pts[:, 1:, 0] - pts[:, :-1, -1], weights).sum(
        axis=1,
    )

    if intermediate is not None:
        value, _ = _intermediate_term(pts.reshape(pts.shape[0], -1, 2), intermediate, weights)
        reward += value

    return reward


def stitch_reward_gradient(
    x: np.ndarray,
    segments: int,
    origin,
    target,
    weights: StitchWeights,
    intermediate=None,
) -> np.ndarray:
    """The analytic gradient of :func:`stitch_reward`, with the attention weights
    differentiated as well.
    """
    pts = chain_points(x, segments)
    grad = np.zeros_like(pts)

    grad[:, 0, 0] -= weights.origin * _penalty_gradient(pts[:, 0, 0] - np.asarray(origin), weights)
    grad[:, -1, -1] -= weights.target * _penalty_gradient(
        pts[:, -1, -1] - np.asarray(target),
        weights,
    )

    gap = _penalty_gradient(pts[:, 1:, 0] - pts[:, :-1, -1], weights)
    grad[:, 1:, 0] -= weights.neighbor * gap
    grad[:, :-1, -1] += weights.neighbor * gap

    if intermediate is not None:
        _, term = _intermediate_term(pts.reshape(pts.shape[0], -1, 2), intermediate, weights)
        grad += term.reshape(grad.shape)

    return grad.reshape(np.atleast_2d(x).shape)


def build_stitch_reward(
    segments: int,
    origin,
    target,
    weights: StitchWeights | None = None,
    intermediate=None,
) -> RewardSpec:
    weights = weights or StitchWeights.defaults(segments)

    return RewardSpec(
        lambda x: stitch_reward(x, segments, origin, target, weights, intermediate),
        lambda x: stitch_reward_gradient(x, segments, origin, target, weights, intermediate),
        "stitch" if intermediate is None else "stitch-intermediate",
    )


def build_intermediate_reward(
    segments: int,
    point,
    weights: StitchWeights | None = None,
) -> RewardSpec:
    """The intermediate-point term on its own, for adding to a running reward."""
    weights = weights or StitchWeights.defaults(segments)

    def term(x):
        return _intermediate_term(
            chain_points(x, segments).reshape(x.shape[0], -1, 2),
            point,
            weights,
        )

    return RewardSpec(
        lambda x: term(x)[0],
        lambda x: term(x)[1].reshape(x.shape),
        "intermediate",
    )


@dataclass(frozen=True, eq=False)
class RewardSchedule:
    """The annealing weight ``beta`` of the reward at every level.

    ``beta`` falls from ``beta_data`` at the lowest level to ``beta_reference`` at the
    top level along a power interpolant with exponent ``rho``.
    """

    levels: np.ndarray
    """The level times ``t_0 < ... < t_M``."""

    rho: float = 5.0

    beta_data: float = 1.0
    beta_reference: float = 0.0

    def beta_of_level(self, m) -> np.ndarray:
        top = self.levels.size - 1

        if top == 0:
            return np.full(np.shape(m), self.beta_data)

        inv = 1.0 / self.rho
        fraction = (top - np.asarray(m, dtype=float)) / top

        return (
            self.beta_reference**inv
            + fraction * (self.beta_data**inv - self.beta_reference**inv)
        ) ** self.rho

    def beta_of_time(self, t) -> np.ndarray:
        """``beta`` at any diffusion time, by fractional level index.

        Times below the lowest level use ``beta_data`` and above the top level
        ``beta_reference``.
        """
        t = np.asarray(t, dtype=float)

        if self.levels.size == 1:
            return np.full(t.shape, self.beta_data)

        index = np.interp(t, self.levels, np.arange(self.levels.size))

        return self.beta_of_level(index)


def tweedie_reward(
    x: np.ndarray,
    t,
    reward: RewardSpec,
    schedule: RewardSchedule,
    model: ContinuousModel,
) -> np.ndarray:
    """``r_t(x) = beta_t * r_0(E[x_0 | x_t = x])``."""
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    beta = schedule.beta_of_time(t)

    value = np.zeros(x.shape[0])
    active = beta > 0

    if np.any(active):
        value[active] = beta[active] * reward(model.denoise(x[active], t[active]))

    return value


def tweedie_reward_gradient(
    x: np.ndarray,
    t,
    reward: RewardSpec,
    schedule: RewardSchedule,
    model: ContinuousModel,
) -> np.ndarray:
    """``grad r_t(x) = beta_t (I + s_t^2 H_t) grad r_0(E[x_0 | x_t])``, with ``H_t`` the
    score Jacobian and ``s_t^2`` the accumulated noise variance.
    """
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    beta = schedule.beta_of_time(t)

    grad = np.zeros_like(x)
    active = beta > 0

    if np.any(active):
        xa, ta = x[active], t[active]
        outer = reward.gradient(model.denoise(xa, ta))
        noise = model.schedule.variance(ta)[:, None]

        grad[active] = beta[active, None] * (outer + noise * model.score_jvp(xa, ta, outer))

    return grad
