"""Weighted particle systems and their resampling schemes.

Weights are kept in the log domain throughout.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator

from crepe.core.logspace import logsumexp
from crepe.errors import DegenerateParticlesError


@dataclass
class ParticleSystem:
    particles: np.ndarray
    """States with shape ``(N, *event_shape)``."""

    log_weights: np.ndarray

    ancestry: list[np.ndarray] = field(default_factory=list)
    """The source index of every particle at each resampling step."""

    @property
    def size(self) -> int:
        return self.log_weights.size

    def normalized_log_weights(self) -> np.ndarray:
        return self.log_weights - _total(self.log_weights)


def _total(log_weights: np.ndarray) -> float:
    if not np.any(np.isfinite(log_weights)):
        raise DegenerateParticlesError("Every particle has zero weight")

    return logsumexp(log_weights)


def ess(log_weights: np.ndarray) -> tuple[float, float]:
    """The effective sample size ``(sum w)^2 / sum w^2`` and its fraction of ``N``."""
    log_weights = np.asarray(log_weights, dtype=float)
    value = math.exp(2.0 * _total(log_weights) - logsumexp(2.0 * log_weights))

    return value, value / log_weights.size


def _systematic_indices(log_weights: np.ndarray, count: int, u: float) -> np.ndarray:
    """``count`` draws from the normalized weights at positions ``(u + i) / count``."""
    cdf = np.cumsum(np.exp(log_weights - _total(log_weights)))
    positions = (u + np.arange(count)) / count

    return np.minimum(np.searchsorted(cdf, positions, side="right"), log_weights.size - 1)


def systematic_resample(
    system: ParticleSystem,
    rng: Generator | None = None,
    u: float | None = None,
) -> ParticleSystem:
    """Replace every particle by a systematic draw. Weights become uniform with the
    same total.
    """
    u = rng.random() if u is None else u
    sources = _systematic_indices(system.log_weights, system.size, u)
    weight = _total(system.log_weights) - math.log(system.size)

    return ParticleSystem(
        system.particles[sources],
        np.full(system.size, weight),
        [*system.ancestry, sources],
    )


def partial_resample(
    system: ParticleSystem,
    fraction: float,
    rng: Generator | None = None,
    u: float | None = None,
) -> ParticleSystem:
    """Replace the ``ceil(fraction * N)`` lowest-weight particles by systematic draws
    from the whole system.

    Ancestors are drawn in proportion to the weights of all ``N`` particles, so
    heavy particles are copied into the replaced slots. Survivors keep their states
    and weights. The replaced slots split the subset's total weight ``W_R``
    evenly, each taking ``W_R / ceil(fraction * N)``, so the total weight and
    with it the normalizing-constant estimate are unchanged. A subset with no mass
    leaves the system as it is.
    """
    if not 0 < fraction <= 1:
        raise ValueError("The resampled fraction must lie in (0, 1]")

    count = math.ceil(fraction * system.size)
    subset = np.sort(np.argsort(system.log_weights, kind="stable")[:count])
    subset_weights = system.log_weights[subset]

    u = rng.random() if u is None else u

    if not np.any(np.isfinite(subset_weights)):
        return ParticleSystem(
            system.particles.copy(),
            system.log_weights.copy(),
            [*system.ancestry, np.arange(system.size)],
        )

    sources = np.arange(system.size)
    sources[subset] = _systematic_indices(system.log_weights, count, u)

    log_weights = system.log_weights.copy()
    log_weights[subset] = _total(subset_weights) - math.log(count)

    return ParticleSystem(
        system.particles[sources],
        log_weights,
        [*system.ancestry, sources],
    )
