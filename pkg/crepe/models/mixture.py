"""Variance-exploding diffusions over Gaussian mixtures.

Noising a Gaussian mixture with zero drift keeps it a Gaussian mixture whose
component variances grow by the accumulated schedule variance, so marginal
densities, scores and posterior means are all available in closed form.
"""

from abc import ABC, abstractmethod
from functools import cached_property

import numpy as np
from numpy.random import Generator
from scipy import special

from crepe.diffusion.gaussian import LOG_2PI
from crepe.diffusion.reference import AffineDrift
from crepe.diffusion.schedules import EdmSchedule, NoiseSchedule


def _batch(x, t) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=float))

    return x, np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))


class ContinuousModel(ABC):
    """An analytic diffusion model over ``R^dim`` with a variance-exploding SDE."""

    schedule: NoiseSchedule
    label: str

    drift = AffineDrift()
    """The forward drift ``f_t``, zero for variance-exploding models."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def log_prob(self, x: np.ndarray, t) -> np.ndarray:
        """The exact marginal log-density ``log p_t(x)`` with shape ``(batch,)``."""

    @abstractmethod
    def score(self, x: np.ndarray, t) -> np.ndarray:
        """``grad log p_t(x)`` with shape ``(batch, dim)``."""

    @abstractmethod
    def denoise(self, x: np.ndarray, t) -> np.ndarray:
        """The posterior mean ``E[x_0 | x_t = x]``."""

    @abstractmethod
    def score_jvp(self, x: np.ndarray, t, v: np.ndarray) -> np.ndarray:
        """The product of the score Jacobian with ``v``."""

    @abstractmethod
    def moments(self) -> tuple[np.ndarray, float]:
        """The data mean and the trace-averaged data variance."""

    @abstractmethod
    def sample(self, n: int, rng: Generator, t: float = 0.0) -> np.ndarray:
        """Draw ``n`` exact samples from ``p_t``."""

    def reverse_drift(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """The exact time-reversal drift ``g_t = f_t - sigma_t^2 grad log p_t``."""
        sigma2 = self.schedule.sigma(t) ** 2

        return self.drift(x, t) - sigma2[:, None] * self.score(x, t)


class GaussianMixtureModel(ContinuousModel):
    """A mixture of isotropic Gaussians noised by a variance-exploding SDE.

    :param weights: positive component weights summing to one
    :param means: component means with shape ``(components, dim)``
    :param variances: isotropic component variances
    :param schedule: the noise schedule, EDM by default
    :param label: the name the model is referred to by in tasks and logs
    """

    def __init__(
        self,
        weights,
        means,
        variances,
        schedule: NoiseSchedule | None = None,
        label: str = "",
    ):
        weights = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float)

        if means.ndim == 1:
            means = means[:, None]

        variances = np.broadcast_to(np.asarray(variances, dtype=float), weights.shape)

        if np.any(weights <= 0) or not np.isclose(weights.sum(), 1.0, atol=1e-10):
            raise ValueError("Mixture weights must be positive and sum to one")

        if means.shape[0] != weights.size:
            raise ValueError("Every component needs exactly one mean")

        if np.any(variances <= 0):
            raise ValueError("Component variances must be positive")

        self.weights = weights
        self.means = means
        self.variances = np.array(variances)
        self.schedule = schedule or EdmSchedule()
        self.label = label

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return self.weights.size

    def _noised_variances(self, t: np.ndarray) -> np.ndarray:
        """Component variances at ``t`` with shape ``(batch, components)``."""
        return self.variances + self.schedule.variance(t)[:, None]

    def _component_log_densities(self, x, t) -> tuple[np.ndarray, np.ndarray]:
        var = self._noised_variances(t)
        sq = np.sum((x[:, None, :] - self.means) ** 2, axis=-1)

        log_dens = (
            np.log(self.weights)
            - 0.5 * self.dim * (LOG_2PI + np.log(var))
            - sq / (2.0 * var)
        )

        return log_dens, var

    def log_prob(self, x, t) -> np.ndarray:
        x, t = _batch(x, t)
        log_dens, _ = self._component_log_densities(x, t)

        return special.logsumexp(log_dens, axis=1)

    def responsibilities(self, x, t) -> np.ndarray:
        """The posterior component probabilities with shape ``(batch, components)``."""
        x, t = _batch(x, t)
        log_dens, _ = self._component_log_densities(x, t)

        return special.softmax(log_dens, axis=1)

    def _component_scores(self, x, t):
        log_dens, var = self._component_log_densities(x, t)
        resp = special.softmax(log_dens, axis=1)
        scores = (self.means - x[:, None, :]) / var[..., None]

        return resp, scores, var

    def score(self, x, t) -> np.ndarray:
        x, t = _batch(x, t)
        resp, scores, _ = self._component_scores(x, t)

        return np.einsum("bc,bcd->bd", resp, scores)

    def denoise(self, x, t) -> np.ndarray:
        x, t = _batch(x, t)
        resp, _, var = self._component_scores(x, t)
        noise = self.schedule.variance(t)[:, None]

        posterior = (
            self.variances[None, :, None] * x[:, None, :]
            + noise[..., None] * self.means[None]
        ) / var[..., None]

        return np.einsum("bc,bcd->bd", resp, posterior)

    def score_jacobian(self, x, t) -> np.ndarray:
        """The Hessian of ``log p_t`` with shape ``(batch, dim, dim)``."""
        x, t = _batch(x, t)
        resp, scores, var = self._component_scores(x, t)
        mean_score = np.einsum("bc,bcd->bd", resp, scores)

        eye = np.eye(self.dim)
        within = -np.einsum("bc,bc->b", resp, 1.0 / var)[:, None, None] * eye
        between = np.einsum("bc,bcd,bce->bde", resp, scores, scores)

        return within + between - np.einsum("bd,be->bde", mean_score, mean_score)

    def score_jvp(self, x, t, v) -> np.ndarray:
        x, t = _batch(x, t)
        v = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
        resp, scores, var = self._component_scores(x, t)
        mean_score = np.einsum("bc,bcd->bd", resp, scores)

        projected = np.einsum("bcd,bd->bc", scores, v)

        return (
            -np.einsum("bc,bc->b", resp, 1.0 / var)[:, None] * v
            + np.einsum("bc,bc,bcd->bd", resp, projected, scores)
            - np.einsum("bd,bd->b", mean_score, v)[:, None] * mean_score
        )

    @cached_property
    def _moments(self) -> tuple[np.ndarray, float]:
        mean = self.weights @ self.means
        spread = np.sum((self.means - mean) ** 2, axis=1)

        return mean, float(self.weights @ (self.variances + spread / self.dim))

    def moments(self) -> tuple[np.ndarray, float]:
        return self._moments

    def sample(self, n: int, rng: Generator, t: float = 0.0) -> np.ndarray:
        components = rng.choice(self.num_components, size=n, p=self.weights)
        std = np.sqrt(self.variances[components] + float(self.schedule.variance(t)))

        return self.means[components] + std[:, None] * rng.standard_normal((n, self.dim))


class SegmentProductModel(ContinuousModel):
    """``J`` independent copies of a segment model, concatenated into one state."""

    def __init__(self, segment: ContinuousModel, copies: int, label: str = ""):
        if copies < 1:
            raise ValueError("A product model needs at least one copy")

        self.segment = segment
        self.copies = copies
        self.schedule = segment.schedule
        self.label = label or segment.label

    @property
    def dim(self) -> int:
        return self.segment.dim * self.copies

    def _blocks(self, x, t) -> tuple[np.ndarray, np.ndarray]:
        """Flatten the copies into the batch axis."""
        x, t = _batch(x, t)

        return (
            x.reshape(x.shape[0] * self.copies, self.segment.dim),
            np.repeat(t, self.copies),
        )

    def _join(self, values: np.ndarray, batch: int) -> np.ndarray:
        return values.reshape(batch, self.dim)

    def log_prob(self, x, t) -> np.ndarray:
        blocks, times = self._blocks(x, t)

        return self.segment.log_prob(blocks, times).reshape(-1, self.copies).sum(axis=1)

    def score(self, x, t) -> np.ndarray:
        blocks, times = self._blocks(x, t)

        return self._join(self.segment.score(blocks, times), blocks.shape[0] // self.copies)

    def denoise(self, x, t) -> np.ndarray:
        blocks, times = self._blocks(x, t)

        return self._join(self.segment.denoise(blocks, times), blocks.shape[0] // self.copies)

    def score_jvp(self, x, t, v) -> np.ndarray:
        blocks, times = self._blocks(x, t)
        v = np.broadcast_to(np.asarray(v, dtype=float), (blocks.shape[0] // self.copies, self.dim))

        return self._join(
            self.segment.score_jvp(blocks, times, v.reshape(blocks.shape)),
            blocks.shape[0] // self.copies,
        )

    def moments(self) -> tuple[np.ndarray, float]:
        mean, var = self.segment.moments()

        return np.tile(mean, self.copies), var

    def sample(self, n: int, rng: Generator, t: float = 0.0) -> np.ndarray:
        return self._join(self.segment.sample(n * self.copies, rng, t), n)


def bimodal_mixture(
    center: float = 2.0,
    std: float = 0.2,
    schedule: NoiseSchedule | None = None,
    label: str = "bimodal",
) -> GaussianMixtureModel:
    """Equal-weight 1-D Gaussians at ``-center`` and ``center``."""
    return GaussianMixtureModel([0.5, 0.5], [-center, center], std**2, schedule, label)
