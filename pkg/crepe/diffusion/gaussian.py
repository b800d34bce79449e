"""Euler-Maruyama simulation and Gaussian path estimators for SDE processes.

Drifts and diffusion coefficients are batched: a drift maps states of shape
``(batch, dim)`` and times of shape ``(batch,)`` to shape ``(batch, dim)``.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from crepe.core.logspace import LogRne, ProcessTag
from crepe.core.paths import Direction, PathSegment
from crepe.errors import DegenerateKernelError, NonFiniteStateError

Drift = Callable[[np.ndarray, np.ndarray], np.ndarray]
Coefficient = Callable[[np.ndarray], np.ndarray]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SdeProcess:
    """An SDE discretized by Euler-Maruyama in one direction of diffusion time."""

    drift: Drift
    """The drift, in the forward (noising) or backward (denoising) role."""

    diffusion_coeff: Coefficient
    """The isotropic diffusion coefficient ``sigma_t``."""

    direction: Direction

    label: str = ""


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)

    if x.ndim == 1:
        return x[None], True

    return x, False


def _broadcast_times(value, batch: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (batch,))


def em_step(
    x: np.ndarray,
    t,
    dt,
    proc: SdeProcess,
    rng: Generator | None = None,
    noise: np.ndarray | None = None,
    level: int | None = None,
    iteration: int | None = None,
) -> np.ndarray:
    """Take one Euler-Maruyama step.

    Forward processes step from ``t`` to ``t + dt``, backward processes from ``t`` to
    ``t - dt``. Both evaluate the drift and diffusion coefficient at ``t``.

    :param x: a state or a batch of states
    :param t: the current time
    :param dt: the positive step size
    :param proc: the process to simulate
    :param rng: the generator standard normal noise is drawn from
    :param noise: explicit standard normal noise, used instead of ``rng``
    :param level: the PT level, for error context
    :param iteration: the engine iteration, for error context
    """
    xb, single = _as_batch(x)
    t = _broadcast_times(t, xb.shape[0])
    dt = _broadcast_times(dt, xb.shape[0])

    if np.any(dt <= 0):
        raise ValueError("Euler-Maruyama steps must be positive")

    if not np.all(np.isfinite(xb)):
        raise NonFiniteStateError(
            "Non-finite state entering an Euler-Maruyama step",
            level,
            iteration,
        )

    if noise is None:
        noise = rng.standard_normal(xb.shape)

    noise = np.asarray(noise, dtype=float).reshape(xb.shape)

    sign = 1.0 if proc.direction == Direction.FORWARD else -1.0
    scale = proc.diffusion_coeff(t) * np.sqrt(dt)

    out = xb + sign * proc.drift(xb, t) * dt[:, None] + scale[:, None] * noise

    return out[0] if single else out


def simulate_path(
    x0: np.ndarray,
    times: np.ndarray,
    proc: SdeProcess,
    rng: Generator | None = None,
    noise: np.ndarray | None = None,
) -> PathSegment:
    """Simulate a batch of paths over the given sub-times.

    Forward paths start at ``times[:, 0]`` and backward paths at ``times[:, -1]``.
    Non-finite states propagate into the path instead of raising, so callers can
    reject individual rows.

    :param x0: starting states with shape ``(batch, dim)``
    :param times: sub-times with shape ``(batch, K + 1)`` or ``(K + 1,)``
    :param proc: the process to simulate
    :param rng: the generator noise is drawn from
    :param noise: explicit noise with shape ``(batch, K, dim)``
    """
    x0 = np.asarray(x0, dtype=float)
    batch, dim = x0.shape
    times = np.broadcast_to(np.asarray(times, dtype=float), (batch, np.shape(times)[-1]))
    steps = times.shape[1] - 1

    if noise is None:
        noise = rng.standard_normal((batch, steps, dim))

    states = np.empty((batch, steps + 1, dim))
    forward = proc.direction == Direction.FORWARD

    order = range(steps) if forward else range(steps, 0, -1)
    states[:, 0 if forward else steps] = x0

    with np.errstate(invalid="ignore", over="ignore"):
        for draw, k in enumerate(order):
            nxt = k + 1 if forward else k - 1
            t = times[:, k]
            dt = np.abs(times[:, nxt] - t)
            x = states[:, k]

            sign = 1.0 if forward else -1.0
            scale = proc.diffusion_coeff(t) * np.sqrt(dt)

            states[:, nxt] = (
                x + sign * proc.drift(x, t) * dt[:, None] + scale[:, None] * noise[:, draw]
            )

    return PathSegment(np.array(times), states, proc.direction)


def _gaussian_log_density(y: np.ndarray, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    dim = y.shape[-1]
    sq = np.sum((y - mean) ** 2, axis=-1)

    return -0.5 * dim * (LOG_2PI + np.log(var)) - sq / (2.0 * var)


def _kernel_mean(x_from, t_eval, dt, proc: SdeProcess) -> np.ndarray:
    sign = 1.0 if proc.direction == Direction.FORWARD else -1.0

    return x_from + sign * proc.drift(x_from, t_eval) * dt[:, None]


def _kernel_variance(t_eval, dt, proc: SdeProcess) -> np.ndarray:
    var = proc.diffusion_coeff(t_eval) ** 2 * dt

    if np.any(var <= 0):
        raise DegenerateKernelError(f"Zero diffusion coefficient in process '{proc.label}'")

    return var


def log_kernel(x_to, x_from, t_eval, dt, proc: SdeProcess) -> np.ndarray:
    """Return the log-density of the Euler-Maruyama kernel ``x_from -> x_to``.

    The drift is evaluated at ``x_from`` and ``t_eval``.
    """
    x_to, single = _as_batch(x_to)
    x_from, _ = _as_batch(x_from)
    batch = x_to.shape[0]
    t_eval = _broadcast_times(t_eval, batch)
    dt = _broadcast_times(dt, batch)

    if np.any(dt <= 0):
        raise ValueError("Kernel steps must be positive")

    value = _gaussian_log_density(
        x_to,
        _kernel_mean(x_from, t_eval, dt, proc),
        _kernel_variance(t_eval, dt, proc),
    )

    return value[0] if single else value


@dataclass(frozen=True)
class _Steps:
    """The flattened sub-steps of a path."""

    earlier: np.ndarray
    later: np.ndarray
    t_earlier: np.ndarray
    t_later: np.ndarray
    dt: np.ndarray
    shape: tuple[int, int]


def _steps(path: PathSegment) -> _Steps:
    batch, steps = path.batch_size, path.num_steps
    dim = path.states.shape[-1]

    return _Steps(
        path.states[:, :-1].reshape(batch * steps, dim),
        path.states[:, 1:].reshape(batch * steps, dim),
        path.times[:, :-1].ravel(),
        path.times[:, 1:].ravel(),
        np.diff(path.times, axis=1).ravel(),
        (batch, steps),
    )


def _check_roles(fwd: SdeProcess, bwd: SdeProcess):
    if fwd.direction != Direction.FORWARD or bwd.direction != Direction.BACKWARD:
        raise ValueError("Expected a forward and a backward process")


def rne_discrete(
    path: PathSegment,
    fwd: SdeProcess,
    bwd: SdeProcess,
    tag: ProcessTag = ProcessTag.PROPOSAL,
    label: str = "",
) -> LogRne:
    """Return ``log R`` as the product of backward over forward Euler-Maruyama kernels.

    Backward kernels are evaluated at the later endpoint of each sub-step and forward
    kernels at the earlier one.
    """
    _check_roles(fwd, bwd)

    if path.num_steps == 0:
        return LogRne(np.zeros(path.batch_size), tag, label)

    s = _steps(path)

    log_b = _gaussian_log_density(
        s.earlier,
        _kernel_mean(s.later, s.t_later, s.dt, bwd),
        _kernel_variance(s.t_later, s.dt, bwd),
    )
    log_f = _gaussian_log_density(
        s.later,
        _kernel_mean(s.earlier, s.t_earlier, s.dt, fwd),
        _kernel_variance(s.t_earlier, s.dt, fwd),
    )

    return LogRne((log_b - log_f).reshape(s.shape).sum(axis=1), tag, label)


def rne_path_integral(
    path: PathSegment,
    mu: Drift,
    nu: Drift,
    sigma: Coefficient,
    tag: ProcessTag = ProcessTag.PROPOSAL,
    label: str = "",
) -> LogRne:
    """Return ``log R`` from the discretized forward and backward Ito integrals.

    The forward integral uses left-endpoint drifts, the backward integral
    right-endpoint drifts and the quadratic term a left Riemann sum.
    """
    if path.num_steps == 0:
        return LogRne(np.zeros(path.batch_size), tag, label)

    s = _steps(path)
    increment = s.later - s.earlier
    sigma2 = sigma(s.t_earlier) ** 2

    if np.any(sigma2 <= 0):
        raise DegenerateKernelError("Zero diffusion coefficient in path integral")

    mu_left = mu(s.earlier, s.t_earlier)
    nu_left = nu(s.earlier, s.t_earlier)
    nu_right = nu(s.later, s.t_later)

    ito = np.sum((nu_right - mu_left) * increment, axis=1) / sigma2
    riemann = (
        0.5
        * (np.sum(mu_left**2, axis=1) - np.sum(nu_left**2, axis=1))
        / sigma2
        * s.dt
    )

    return LogRne((ito + riemann).reshape(s.shape).sum(axis=1), tag, label)


def _log_ratio_same_variance(y, mean_a, mean_b, var) -> np.ndarray:
    """``log N(y; mean_a, var) - log N(y; mean_b, var)`` without the normalizers."""
    return np.sum((mean_a - mean_b) * (2.0 * y - mean_a - mean_b), axis=1) / (2.0 * var)


def rne_stabilized(
    path: PathSegment,
    fwd: SdeProcess,
    bwd: SdeProcess,
    ref,
    tag: ProcessTag = ProcessTag.PROPOSAL,
    label: str = "",
) -> LogRne:
    """Return ``log R`` measured against a Gaussian reference diffusion.

    Each backward kernel is divided by the reference backward kernel and each forward
    kernel by the reference forward kernel with the same variance, so the kernel
    normalizers cancel exactly. The reference path estimator is replaced by its
    closed-form marginal ratio ``gamma_t(x_t) / gamma_t'(x_t')``.

    :param ref: a :class:`crepe.diffusion.reference.ReferenceProcess`
    """
    _check_roles(fwd, bwd)

    if path.num_steps == 0:
        return LogRne(np.zeros(path.batch_size), tag, label)

    s = _steps(path)

    ref_b = ref.backward_process()
    ref_f = ref.forward_process()

    var_b = _kernel_variance(s.t_later, s.dt, bwd)
    var_f = _kernel_variance(s.t_earlier, s.dt, fwd)

    backward = _log_ratio_same_variance(
        s.earlier,
        _kernel_mean(s.later, s.t_later, s.dt, bwd),
        _kernel_mean(s.later, s.t_later, s.dt, ref_b),
        var_b,
    )
    forward = _log_ratio_same_variance(
        s.later,
        _kernel_mean(s.earlier, s.t_earlier, s.dt, ref_f),
        _kernel_mean(s.earlier, s.t_earlier, s.dt, fwd),
        var_f,
    )

    kernels = (backward + forward).reshape(s.shape).sum(axis=1)
    marginals = ref.log_density(path.start, path.times[:, 0]) - ref.log_density(
        path.end,
        path.times[:, -1],
    )

    return LogRne(kernels + marginals, tag, label)
