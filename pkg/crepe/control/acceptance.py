"""Path estimators and swap acceptance for control tasks.

A swap between levels ``m - 1`` and ``m`` compares the forward path ``X`` noised
from level ``m - 1`` with the backward path ``X'`` denoised from level ``m``. The
target ratio of a path over ``[t, t']`` is estimated by the base models' path
estimators and corrected by the proposal's.
"""

from dataclasses import dataclass

import numpy as np

from crepe.control.proposals import ProcessPair
from crepe.control.tasks import ControlTask
from crepe.core.logspace import LogRne, ProcessTag
from crepe.core.paths import PathSegment
from crepe.diffusion.discrete import DEFAULT_KERNEL, KernelOptions, rne_discrete_ctmc
from crepe.diffusion.gaussian import rne_discrete, rne_stabilized
from crepe.diffusion.reference import ReferenceProcess
from crepe.errors import ConfigError


@dataclass(frozen=True)
class PathRnes:
    """The path estimators of one batch of paths."""

    pretrained: tuple[LogRne, ...]
    """One estimate per task model, in task order."""

    proposal: LogRne

    @property
    def is_finite(self) -> np.ndarray:
        finite = self.proposal.is_finite

        for rne in self.pretrained:
            finite = finite & rne.is_finite

        return finite


def path_rne(
    path: PathSegment,
    pair: ProcessPair,
    tag: ProcessTag,
    label: str = "",
    reference: ReferenceProcess | None = None,
    options: KernelOptions = DEFAULT_KERNEL,
) -> LogRne:
    """``log R`` of one process pair along a batch of paths."""
    if pair.is_discrete:
        return rne_discrete_ctmc(path, pair.forward, pair.backward, options, tag, label)

    if reference is not None:
        return rne_stabilized(path, pair.forward, pair.backward, reference, tag, label)

    return rne_discrete(path, pair.forward, pair.backward, tag, label)


def path_rnes(
    path: PathSegment,
    proposal: ProcessPair,
    pretrained: tuple[ProcessPair, ...],
    reference: ReferenceProcess | None = None,
    options: KernelOptions = DEFAULT_KERNEL,
) -> PathRnes:
    """Every estimate a task needs along a batch of paths."""
    with np.errstate(invalid="ignore", over="ignore"):
        return PathRnes(
            tuple(
                path_rne(path, pair, ProcessTag.PRETRAINED, pair.backward.label, reference, options)
                for pair in pretrained
            ),
            path_rne(path, proposal, ProcessTag.PROPOSAL, "proposal", reference, options),
        )


def log_target_ratio(task: ControlTask, path: PathSegment, rnes: PathRnes) -> np.ndarray:
    """Estimate ``log pi_{t'}(X_{t'}) - log pi_t(X_t)`` along a batch of paths."""
    if len(rnes.pretrained) != len(task.models):
        raise ConfigError(
            f"The task needs {len(task.models)} path estimates but {len(rnes.pretrained)} "
            "were given",
        )

    value = np.zeros(path.batch_size)

    with np.errstate(invalid="ignore"):
        for weight, rne in zip(task.target_weights, rnes.pretrained, strict=True):
            if weight != 0.0:
                value = value - weight * rne.value

        if task.has_reward:
            value = (
                value
                + task.reward_at(path.end, path.times[:, -1])
                - task.reward_at(path.start, path.times[:, 0])
            )

    return value


def swap_log_ratio(
    task: ControlTask,
    forward_path: PathSegment,
    backward_path: PathSegment,
    forward_rnes: PathRnes,
    backward_rnes: PathRnes,
) -> np.ndarray:
    """The log Metropolis-Hastings ratio of a swap before truncation at zero."""
    with np.errstate(invalid="ignore"):
        return (
            log_target_ratio(task, forward_path, forward_rnes)
            - log_target_ratio(task, backward_path, backward_rnes)
            + forward_rnes.proposal.value
            - backward_rnes.proposal.value
        )


def swap_log_accept(
    task: ControlTask,
    forward_path: PathSegment,
    backward_path: PathSegment,
    forward_rnes: PathRnes,
    backward_rnes: PathRnes,
) -> np.ndarray:
    """``log alpha`` of swapping the states of two adjacent levels.

    Swaps with a non-finite estimate on either path are rejected.
    """
    ratio = swap_log_ratio(task, forward_path, backward_path, forward_rnes, backward_rnes)
    valid = forward_rnes.is_finite & backward_rnes.is_finite & ~np.isnan(ratio)

    return np.where(valid, np.minimum(0.0, ratio), -np.inf)


def smc_log_increment(task: ControlTask, path: PathSegment, rnes: PathRnes) -> np.ndarray:
    """The incremental log-weight of particles moved along backward paths.

    Particles with a non-finite estimate get weight zero.
    """
    with np.errstate(invalid="ignore"):
        value = -(log_target_ratio(task, path, rnes) + rnes.proposal.value)

    return np.where(rnes.is_finite & np.isfinite(value), value, -np.inf)
