"""Forward and backward proposal processes of control tasks."""

from dataclasses import dataclass

import numpy as np

from crepe.control.tasks import ControlTask, Model
from crepe.core.paths import Direction
from crepe.diffusion.discrete import RateMatrixSpec, guided_backward_spec, masking_forward_spec
from crepe.diffusion.gaussian import SdeProcess
from crepe.models.discrete import ExactDiscreteModel

Process = SdeProcess | RateMatrixSpec


@dataclass(frozen=True)
class ProcessPair:
    """A forward noising process and a backward denoising process."""

    forward: Process
    backward: Process

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.forward, RateMatrixSpec)


def _forward_sde(model: Model) -> SdeProcess:
    return SdeProcess(model.drift, model.schedule.sigma, Direction.FORWARD, model.label)


def pretrained_pair(model: Model) -> ProcessPair:
    """The noising process of a base model and its exact time reversal."""
    if isinstance(model, ExactDiscreteModel):
        return ProcessPair(
            masking_forward_spec(model.vocab_size),
            guided_backward_spec(
                [model.log_unmask_conditional],
                [1.0],
                model.vocab_size,
                model.label,
            ),
        )

    return ProcessPair(
        _forward_sde(model),
        SdeProcess(model.reverse_drift, model.schedule.sigma, Direction.BACKWARD, model.label),
    )


def proposal_pair(task: ControlTask) -> ProcessPair:
    """The proposal processes ``(P, Q)`` of a task.

    The forward proposal is the noising process of the first model. The backward
    proposal denoises with the task's weighted score, plus the reward gradient when
    the task guides its proposal with it.
    """
    first = task.models[0]
    weights = task.proposal_weights

    if task.is_discrete:
        return ProcessPair(
            masking_forward_spec(first.vocab_size),
            guided_backward_spec(
                [m.log_unmask_conditional for m in task.models],
                weights,
                first.vocab_size,
                "proposal",
            ),
        )

    sigma = first.schedule.sigma

    def drift(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        score = 0.0

        for model, weight in zip(task.models, weights, strict=True):
            if weight != 0.0:
                score = score + weight * model.score(x, t)

        if task.use_proposal_gradient:
            score = score + task.reward_gradient_at(x, t)

        return first.drift(x, t) - sigma(t)[:, None] ** 2 * score

    return ProcessPair(
        _forward_sde(first),
        SdeProcess(drift, sigma, Direction.BACKWARD, "proposal"),
    )
