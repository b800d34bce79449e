"""Local exploration moves that leave each level's target invariant."""

import numpy as np

from crepe.control.tasks import ControlTask, target_log_ratios, target_score
from crepe.diffusion.discrete import sample_categorical
from crepe.diffusion.schedules import masking_rate
from crepe.pt.config import CtmcProposal


def langevin_step_size(sigma: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """``sigma_t^2 dt / 2``, the unadjusted Langevin step of a level."""
    return 0.5 * sigma**2 * dt


def langevin_move(
    task: ControlTask,
    x: np.ndarray,
    t: np.ndarray,
    step: np.ndarray,
    noise: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One unadjusted Langevin step ``x + h grad log pi_t(x) + sqrt(2 h) xi`` per row.

    Rows whose proposal is not finite keep their state.

    :return: the new states and a mask of the rows that were skipped
    """
    with np.errstate(invalid="ignore", over="ignore"):
        score = target_score(task, x, t, task.use_local_gradient)
        moved = x + step[:, None] * score + np.sqrt(2.0 * step)[:, None] * noise

    skipped = ~np.all(np.isfinite(moved), axis=1)

    return np.where(skipped[:, None], x, moved), skipped


def proposal_rates(
    x: np.ndarray,
    pos: int,
    t: np.ndarray,
    proposal: CtmcProposal,
    vocab_size: int,
) -> np.ndarray:
    """The symmetric proposal rates from ``x`` to every value at ``pos``.

    :return: shape ``(batch, V)`` with a zero diagonal
    """
    mask = vocab_size - 1
    current = x[:, pos]
    onehot = np.eye(vocab_size, dtype=bool)[current]

    if proposal == CtmcProposal.UNIFORM:
        return np.where(onehot, 0.0, 1.0 / (vocab_size - 1))

    rate = masking_rate(t)[:, None]
    masked = (current == mask)[:, None]
    to_mask = np.arange(vocab_size) == mask

    rates = np.where(masked, np.where(to_mask, 0.0, rate), np.where(to_mask, rate, 0.0))

    return np.where(onehot, 0.0, rates)


def _holding_step(h: np.ndarray, t: np.ndarray, proposal: CtmcProposal, vocab_size: int):
    """Cap ``h`` so that no state leaves with probability above one."""
    if proposal == CtmcProposal.UNIFORM:
        exit_rate = np.ones_like(t)
    else:
        exit_rate = masking_rate(t) * (vocab_size - 1)

    return np.minimum(h, 1.0 / exit_rate)


def mh_position_probs(
    task: ControlTask,
    x: np.ndarray,
    pos: int,
    t: np.ndarray,
    h: np.ndarray,
    proposal: CtmcProposal,
) -> np.ndarray:
    """The Metropolis-Hastings kernel ``P(x -> y) = h r(x, y) min(1, pi_t(y) / pi_t(x))``
    over the values of one position.

    :return: shape ``(batch, V)``
    """
    x = np.asarray(x, dtype=np.int64)
    vocab_size = task.models[0].vocab_size

    rates = proposal_rates(x, pos, t, proposal, vocab_size)
    step = _holding_step(h, t, proposal, vocab_size)

    with np.errstate(over="ignore"):
        accept = np.minimum(1.0, np.exp(target_log_ratios(task, x, t)[:, pos]))

    probs = step[:, None] * rates * accept
    onehot = np.eye(vocab_size, dtype=bool)[x[:, pos]]

    return np.where(onehot, 1.0 - probs.sum(axis=1, keepdims=True), probs)


def ctmc_mh_sweep(
    task: ControlTask,
    x: np.ndarray,
    t: np.ndarray,
    h: np.ndarray,
    proposal: CtmcProposal,
    uniforms: np.ndarray,
) -> np.ndarray:
    """One systematic scan of Metropolis-Hastings updates over every position.

    :param uniforms: one uniform per row and position, shape ``(batch, D)``
    """
    x = np.array(x, dtype=np.int64)

    for pos in range(x.shape[1]):
        probs = mh_position_probs(task, x, pos, t, h, proposal)
        x[:, pos] = sample_categorical(probs, uniforms[:, pos])

    return x
