"""Masking CTMC simulation with Euler-discretized categorical kernels.

Token states are integer arrays of shape ``(batch, D)``. Rate functions return the
off-diagonal jump rates to every vocabulary entry with shape ``(batch, D, V)``; the
diagonal is implied by the row sum.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from crepe.core.logspace import LogRne, ProcessTag
from crepe.core.paths import Direction, PathSegment
from crepe.diffusion.schedules import MASK_CLIP, masking_rate

RateFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KernelOptions:
    floor: float = 1e-8
    """The lower bound probabilities are clipped to before renormalization."""

    renormalize: bool = True
    """Rescale clipped kernel rows to sum to one."""

    strict: bool = False
    """Clip at zero instead of ``floor`` so that impossible transitions have
    probability zero and their path estimators are ``-inf``.
    """


DEFAULT_KERNEL = KernelOptions()


@dataclass(frozen=True)
class DiscreteState:
    """A single token sequence."""

    tokens: np.ndarray
    mask_index: int
    vocab_size: int

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)

        if np.any(tokens < 0) or np.any(tokens >= self.vocab_size):
            raise ValueError(f"Token indices must lie in [0, {self.vocab_size})")

        object.__setattr__(self, "tokens", tokens)

    @property
    def is_fully_masked(self) -> bool:
        return bool(np.all(self.tokens == self.mask_index))


@dataclass(frozen=True)
class RateMatrixSpec:
    role: Direction
    """Forward (noising) or backward (denoising) rates."""

    rates: RateFn
    """Maps tokens ``(batch, D)`` and times ``(batch,)`` to rates ``(batch, D, V)``."""

    vocab_size: int
    mask_index: int
    label: str = ""


def masking_forward_spec(vocab_size: int) -> RateMatrixSpec:
    """The forward masking process: unmasked tokens jump to the mask at ``lambda(t)``."""
    mask = vocab_size - 1

    def rates(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        out = np.zeros((*x.shape, vocab_size))
        out[..., mask] = np.where(x != mask, masking_rate(t)[:, None], 0.0)

        return out

    return RateMatrixSpec(Direction.FORWARD, rates, vocab_size, mask, "masking")


def guided_backward_spec(
    log_conditionals: Sequence[Callable[[np.ndarray], np.ndarray]],
    weights: Sequence[float],
    vocab_size: int,
    label: str = "",
) -> RateMatrixSpec:
    """Backward rates ``Lambda_t(y, x) * prod_j (p^j_t(y) / p^j_t(x))^{w_j}``.

    Under linear masking the ratio for unmasking position ``i`` to ``v`` is
    ``(1 - t) / t * p^j_0(v | visible tokens)``, so the rate is evaluated in log space
    as ``(s - 1) log(1 - t) - s log t + sum_j w_j log p^j_0(v | visible)`` with
    ``s = sum_j w_j``. Unmasked tokens never move backward in time.

    :param log_conditionals: per model, a map from tokens to the log posterior of
        every unmasked token value at every position, shape ``(batch, D, V - 1)``
    :param weights: the exponent of each model's concrete score
    :param vocab_size: ``V`` including the mask
    """
    mask = vocab_size - 1
    total = float(sum(weights))

    def rates(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        t_col = t[:, None, None]
        clipped = np.minimum(t_col, 1.0 - MASK_CLIP)

        with np.errstate(divide="ignore", invalid="ignore"):
            log_rate = (total - 1.0) * np.log1p(-clipped) - total * np.log(t_col)

            for log_conditional, weight in zip(log_conditionals, weights, strict=True):
                if weight != 0.0:
                    log_rate = log_rate + weight * log_conditional(x)

            unmask = np.exp(log_rate)

        out = np.zeros((*x.shape, vocab_size))
        out[..., :mask] = np.where((x == mask)[..., None], unmask, 0.0)

        return out

    return RateMatrixSpec(Direction.BACKWARD, rates, vocab_size, mask, label)


def kernel_probs(
    x: np.ndarray,
    t: np.ndarray,
    dt: np.ndarray,
    spec: RateMatrixSpec,
    options: KernelOptions = DEFAULT_KERNEL,
) -> np.ndarray:
    """Return the per-token Euler kernel ``delta + rate * dt`` for a batch of states.

    Non-finite entries are removed and every entry is clipped at the floor (or zero in
    strict mode) before the rows are renormalized.

    :return: probabilities with shape ``(batch, D, V)``
    """
    x = np.asarray(x, dtype=np.int64)
    onehot = np.eye(spec.vocab_size, dtype=bool)[x]

    rates = np.where(onehot, 0.0, spec.rates(x, t))

    with np.errstate(invalid="ignore", over="ignore"):
        jumps = rates * dt[:, None, None]
        probs = np.where(onehot, 1.0 - jumps.sum(axis=-1, keepdims=True), jumps)

    floor = 0.0 if options.strict else options.floor

    probs = np.where(np.isfinite(probs), probs, floor)
    probs = np.maximum(probs, floor)

    if options.renormalize:
        probs = probs / probs.sum(axis=-1, keepdims=True)

    return probs


def euler_kernel_probs(
    x: DiscreteState | np.ndarray,
    pos: int,
    t: float,
    dt: float,
    spec: RateMatrixSpec,
    options: KernelOptions = DEFAULT_KERNEL,
) -> np.ndarray:
    """Return the Euler kernel of one token position as a length-``V`` vector."""
    if dt <= 0:
        raise ValueError("Kernel steps must be positive")

    tokens = x.tokens if isinstance(x, DiscreteState) else np.asarray(x)

    return kernel_probs(tokens[None], np.array([t]), np.array([dt]), spec, options)[0, pos]


def sample_categorical(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = np.inf

    return np.argmax(cdf > uniforms[..., None], axis=-1)


def ctmc_step(
    x: DiscreteState | np.ndarray,
    t,
    dt,
    spec: RateMatrixSpec,
    rng: Generator | None = None,
    uniforms: np.ndarray | None = None,
    options: KernelOptions = DEFAULT_KERNEL,
):
    """Sample every token position independently from its Euler kernel at ``t``.

    Forward specs move from ``t`` to ``t + dt`` and backward specs from ``t`` to
    ``t - dt``.
    """
    single = isinstance(x, DiscreteState)
    tokens = x.tokens[None] if single else np.asarray(x, dtype=np.int64)
    batch = tokens.shape[0]

    probs = kernel_probs(
        tokens,
        np.broadcast_to(np.asarray(t, dtype=float), (batch,)),
        np.broadcast_to(np.asarray(dt, dtype=float), (batch,)),
        spec,
        options,
    )

    if uniforms is None:
        uniforms = rng.random(tokens.shape)

    out = sample_categorical(probs, uniforms.reshape(tokens.shape))

    if single:
        return DiscreteState(out[0], x.mask_index, x.vocab_size)

    return out


def simulate_ctmc_path(
    x0: np.ndarray,
    times: np.ndarray,
    spec: RateMatrixSpec,
    rng: Generator | None = None,
    uniforms: np.ndarray | None = None,
    options: KernelOptions = DEFAULT_KERNEL,
) -> PathSegment:
    """Simulate a batch of token paths over the given sub-times.

    :param x0: starting tokens with shape ``(batch, D)``
    :param times: sub-times with shape ``(batch, K + 1)`` or ``(K + 1,)``
    :param uniforms: explicit uniforms with shape ``(batch, K, D)``
    """
    x0 = np.asarray(x0, dtype=np.int64)
    batch, tokens = x0.shape
    times = np.broadcast_to(np.asarray(times, dtype=float), (batch, np.shape(times)[-1]))
    steps = times.shape[1] - 1

    if uniforms is None:
        uniforms = rng.random((batch, steps, tokens))

    states = np.empty((batch, steps + 1, tokens), dtype=np.int64)
    forward = spec.role == Direction.FORWARD

    order = range(steps) if forward else range(steps, 0, -1)
    states[:, 0 if forward else steps] = x0

    for draw, k in enumerate(order):
        nxt = k + 1 if forward else k - 1
        t = times[:, k]

        probs = kernel_probs(states[:, k], t, np.abs(times[:, nxt] - t), spec, options)
        states[:, nxt] = sample_categorical(probs, uniforms[:, draw])

    return PathSegment(np.array(times), states, spec.role)


def _log_taken(probs: np.ndarray, taken: np.ndarray) -> np.ndarray:
    chosen = np.take_along_axis(probs, taken[..., None], axis=-1)[..., 0]

    with np.errstate(divide="ignore"):
        return np.log(chosen).sum(axis=-1)


def rne_discrete_ctmc(
    path: PathSegment,
    fwd: RateMatrixSpec,
    bwd: RateMatrixSpec,
    options: KernelOptions = DEFAULT_KERNEL,
    tag: ProcessTag = ProcessTag.PROPOSAL,
    label: str = "",
) -> LogRne:
    """Return ``log R`` as backward over forward categorical kernel products.

    Backward kernels are evaluated at the later state and time of each sub-step,
    forward kernels at the earlier ones.
    """
    if fwd.role != Direction.FORWARD or bwd.role != Direction.BACKWARD:
        raise ValueError("Expected a forward and a backward rate specification")

    if path.num_steps == 0:
        return LogRne(np.zeros(path.batch_size), tag, label)

    batch, steps = path.batch_size, path.num_steps
    tokens = path.states.shape[-1]

    earlier = path.states[:, :-1].reshape(batch * steps, tokens)
    later = path.states[:, 1:].reshape(batch * steps, tokens)
    t_earlier = path.times[:, :-1].ravel()
    t_later = path.times[:, 1:].ravel()
    dt = np.diff(path.times, axis=1).ravel()

    log_b = _log_taken(kernel_probs(later, t_later, dt, bwd, options), earlier)
    log_f = _log_taken(kernel_probs(earlier, t_earlier, dt, fwd, options), later)

    with np.errstate(invalid="ignore"):
        value = (log_b - log_f).reshape(batch, steps).sum(axis=1)

    # A zero-probability transition in either direction makes the path impossible.
    impossible = np.isneginf(log_b) | np.isneginf(log_f)
    value = np.where(impossible.reshape(batch, steps).any(axis=1), -np.inf, value)

    return LogRne(value, tag, label)


def exact_concrete_score(
    x: DiscreteState | np.ndarray,
    y_token: int,
    pos: int,
    t: float,
    model,
) -> float:
    """Return ``p_t(y) / p_t(x)`` where ``y`` is ``x`` with ``pos`` set to ``y_token``.

    :param model: an :class:`crepe.models.discrete.ExactDiscreteModel`
    """
    tokens = x.tokens if isinstance(x, DiscreteState) else np.asarray(x, dtype=np.int64)

    y = tokens.copy()
    y[pos] = y_token

    if np.array_equal(y, tokens):
        return 1.0

    log_p = model.log_prob(np.stack([y, tokens]), np.array([t, t]))

    with np.errstate(invalid="ignore"):
        return float(np.exp(log_p[0] - log_p[1]))
