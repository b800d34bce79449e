"""Inference-time control tasks.

A task defines the annealing path ``pi_t`` as a weighted product of base-model
marginals, optionally tilted by a Tweedie-lifted reward, together with the weights
its proposal processes use.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import StrEnum
from functools import cached_property
from typing import ClassVar

import numpy as np
from numpy.random import Generator
from structlog import get_logger

from crepe.control.rewards import (
    RewardSchedule,
    RewardSpec,
    tweedie_reward,
    tweedie_reward_gradient,
)
from crepe.diffusion.reference import ReferenceProcess
from crepe.errors import ConfigError
from crepe.models.discrete import ExactDiscreteModel
from crepe.models.mixture import ContinuousModel

logger = get_logger("control.tasks")

Model = ContinuousModel | ExactDiscreteModel


class TaskKind(StrEnum):
    TEMPERING = "tempering"
    REWARD = "reward"
    COMPOSITION = "composition"
    CFG = "cfg"


class ControlTask(ABC):
    """The target ``pi_t ~ prod_j p^j_t ^ w_j * exp(r_t)`` of a control task."""

    kind: ClassVar[TaskKind]

    @property
    @abstractmethod
    def models(self) -> tuple[Model, ...]:
        """The base models whose path estimates the target needs, in order."""

    @property
    @abstractmethod
    def target_weights(self) -> tuple[float, ...]:
        """The exponent of each base model in ``pi_t``."""

    @property
    @abstractmethod
    def proposal_weights(self) -> tuple[float, ...]:
        """The score weights of the backward proposal."""

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.models[0], ExactDiscreteModel)

    @property
    def has_reward(self) -> bool:
        return False

    @property
    def use_proposal_gradient(self) -> bool:
        return False

    @property
    def use_local_gradient(self) -> bool:
        return False

    def reward_at(self, x: np.ndarray, t) -> np.ndarray:
        """The intermediate reward ``r_t(x)``, zero for untilted tasks."""
        return np.zeros(np.atleast_2d(x).shape[0])

    def reward_gradient_at(self, x: np.ndarray, t) -> np.ndarray:
        return np.zeros_like(np.atleast_2d(x), dtype=float)

    def _check_models(self):
        models = self.models
        discrete = [isinstance(m, ExactDiscreteModel) for m in models]

        if any(discrete) and not all(discrete):
            raise ConfigError("A task cannot mix continuous and discrete models")

        if all(discrete):
            shapes = {(m.vocab_size, m.num_tokens) for m in models}

            if len(shapes) > 1:
                raise ConfigError("Discrete models in one task must share V and D")
        else:
            if len({m.dim for m in models}) > 1:
                raise ConfigError("Continuous models in one task must share a dimension")

            if len({m.schedule.name for m in models}) > 1:
                raise ConfigError("Continuous models in one task must share a noise schedule")


@dataclass(frozen=True, eq=False)
class Tempering(ControlTask):
    """``pi_t ~ p_t^beta``."""

    model: Model
    beta: float

    kind = TaskKind.TEMPERING

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ConfigError("The inverse temperature must be finite and non-negative")

    @property
    def models(self):
        return (self.model,)

    @property
    def target_weights(self):
        return (self.beta,)

    @property
    def proposal_weights(self):
        return (self.beta,)


@dataclass(frozen=True, eq=False)
class RewardTilt(ControlTask):
    """``pi_t ~ p_t exp(r_t)`` with ``r_t`` the reward of the posterior mean."""

    model: ContinuousModel
    reward: RewardSpec
    schedule: RewardSchedule

    proposal_gradient: bool = True
    """Guide the backward proposal with ``grad r_t``."""

    local_gradient: bool = True
    """Include ``grad r_t`` in local Langevin moves."""

    kind = TaskKind.REWARD

    def __post_init__(self):
        if isinstance(self.model, ExactDiscreteModel):
            raise ConfigError("Reward tilting needs a continuous model with a denoiser")

        if self.proposal_gradient and not self.reward.has_gradient:
            logger.info(
                "Reward has no gradient. Falling back to a score-only proposal.",
                reward=self.reward.label,
            )

    @property
    def models(self):
        return (self.model,)

    @property
    def target_weights(self):
        return (1.0,)

    @property
    def proposal_weights(self):
        return (1.0,)

    @property
    def has_reward(self) -> bool:
        return True

    @property
    def use_proposal_gradient(self) -> bool:
        return self.proposal_gradient and self.reward.has_gradient

    @property
    def use_local_gradient(self) -> bool:
        return self.local_gradient and self.reward.has_gradient

    def reward_at(self, x, t):
        return tweedie_reward(x, t, self.reward, self.schedule, self.model)

    def reward_gradient_at(self, x, t):
        return tweedie_reward_gradient(x, t, self.reward, self.schedule, self.model)

    def with_reward(self, reward: RewardSpec) -> "RewardTilt":
        """Replace the terminal reward, keeping the evaluation count."""
        return replace(self, reward=reward.with_counter(self.reward.counter))


@dataclass(frozen=True, eq=False)
class Composition(ControlTask):
    """``pi_t ~ prod_j p^j_t``."""

    components: tuple[Model, ...]

    kind = TaskKind.COMPOSITION

    def __post_init__(self):
        if len(self.components) < 2:
            raise ConfigError("Composition needs at least two models")

        self._check_models()

    @property
    def models(self):
        return tuple(self.components)

    @property
    def target_weights(self):
        return (1.0,) * len(self.components)

    @property
    def proposal_weights(self):
        return self.target_weights


@dataclass(frozen=True, eq=False)
class CfgDebias(ControlTask):
    """``pi_t ~ p_t^(1 - w) p_t(. | c)^w``, proposed with guidance strength ``w_prop``."""

    unconditional: Model
    conditional: Model
    w: float
    w_prop: float

    kind = TaskKind.CFG

    def __post_init__(self):
        if not (np.isfinite(self.w) and np.isfinite(self.w_prop)):
            raise ConfigError("Guidance weights must be finite")

        self._check_models()

    @property
    def models(self):
        return (self.unconditional, self.conditional)

    @property
    def target_weights(self):
        return (1.0 - self.w, self.w)

    @property
    def proposal_weights(self):
        return (1.0 - self.w_prop, self.w_prop)


def _weighted(weights, values) -> np.ndarray:
    """``sum_j w_j v_j`` skipping zero weights so that ``0 * inf`` never appears."""
    total = 0.0

    for weight, value in zip(weights, values, strict=True):
        if weight != 0.0:
            total = total + weight * value

    return total


def exact_log_target(task: ControlTask, x: np.ndarray, t) -> np.ndarray:
    """The unnormalized ``log pi_t(x)`` from exact model densities."""
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))

    with np.errstate(invalid="ignore"):
        value = _weighted(
            task.target_weights,
            [m.log_prob(x, t) for m in task.models],
        )

    value = np.broadcast_to(value, (x.shape[0],)) + task.reward_at(x, t)

    return np.where(np.isnan(value), -np.inf, value)


def target_score(
    task: ControlTask,
    x: np.ndarray,
    t,
    with_reward_gradient: bool = True,
) -> np.ndarray:
    """``grad log pi_t(x)`` for continuous tasks."""
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))

    score = _weighted(task.target_weights, [m.score(x, t) for m in task.models])
    score = np.broadcast_to(score, x.shape)

    if with_reward_gradient and task.has_reward:
        score = score + task.reward_gradient_at(x, t)

    return score


def target_log_ratios(task: ControlTask, x: np.ndarray, t) -> np.ndarray:
    """``log pi_t(y) - log pi_t(x)`` for every single-token change ``y`` of ``x``.

    :return: shape ``(batch, D, V)``
    """
    with np.errstate(invalid="ignore"):
        value = _weighted(
            task.target_weights,
            [m.log_ratios(x, t) for m in task.models],
        )

    return np.where(np.isnan(value), -np.inf, value)


@dataclass(frozen=True)
class TopReference:
    """The tractable distribution the top level is drawn from."""

    mean: np.ndarray | None = None
    var: float | None = None
    mask_shape: tuple[int, ...] | None = None
    mask_index: int | None = None

    @property
    def is_discrete(self) -> bool:
        return self.mask_shape is not None

    def sample(self, n: int, rng: Generator) -> np.ndarray:
        if self.is_discrete:
            return np.full((n, *self.mask_shape), self.mask_index, dtype=np.int64)

        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.mean.size))


def top_reference(task: ControlTask, t_max: float) -> TopReference:
    """The Gaussian closest to ``pi_{t_max}`` by moment matching each model, or the
    all-mask state for discrete tasks.
    """
    if task.is_discrete:
        model = task.models[0]

        return TopReference(mask_shape=(model.num_tokens,), mask_index=model.mask_index)

    precision = 0.0
    weighted_mean = 0.0

    for model, weight in zip(task.models, task.target_weights, strict=True):
        mean, var = model.moments()
        var = var + float(model.schedule.variance(t_max))

        precision += weight / var
        weighted_mean = weighted_mean + weight * mean / var

    if precision <= 0:
        raise ConfigError("The task's top-level target is not normalizable")

    return TopReference(mean=weighted_mean / precision, var=1.0 / precision)


def reference_for(task: ControlTask) -> ReferenceProcess:
    """A Gaussian reference diffusion moment-matched to the first model's data."""
    if task.is_discrete:
        raise ConfigError("Reference stabilization applies to continuous tasks only")

    model = task.models[0]
    mean, var = model.moments()

    return ReferenceProcess(mean, var, model.drift, model.schedule)


class EventMode(StrEnum):
    ADD = "add"
    REPLACE = "replace"


@dataclass(frozen=True)
class OnlineEvent:
    """A reward change applied from ``iteration`` onwards."""

    iteration: int
    reward: RewardSpec
    mode: EventMode = EventMode.ADD


class TaskTimeline:
    """The task in force at every iteration of a run with online events."""

    def __init__(self, task: ControlTask, events: tuple[OnlineEvent, ...] = ()):
        if events and not isinstance(task, RewardTilt):
            raise ConfigError("Online events can only change the reward of a reward task")

        if any(a.iteration > b.iteration for a, b in zip(events, events[1:])):
            raise ConfigError("Online events must be sorted by iteration")

        self.events = tuple(events)
        self._tasks = [task]

        for event in self.events:
            current = self._tasks[-1]

            reward = (
                current.reward + event.reward
                if event.mode == EventMode.ADD
                else event.reward
            )

            self._tasks.append(current.with_reward(reward))

    @cached_property
    def _starts(self) -> np.ndarray:
        return np.array([e.iteration for e in self.events], dtype=np.int64)

    def index_at(self, iteration: int) -> int:
        """The number of events in force at ``iteration``."""
        return int(np.searchsorted(self._starts, iteration, side="right"))

    def at(self, iteration: int) -> ControlTask:
        return self._tasks[self.index_at(iteration)]
