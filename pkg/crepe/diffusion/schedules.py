"""Noise and masking schedules."""

from abc import ABC, abstractmethod

import numpy as np

from crepe.errors import InvalidScheduleError

MASK_CLIP = 1e-4
"""Masking rates are evaluated at ``min(t, 1 - MASK_CLIP)``."""


class NoiseSchedule(ABC):
    """The diffusion coefficient of a variance-exploding SDE with zero drift."""

    name: str

    @abstractmethod
    def sigma(self, t: np.ndarray) -> np.ndarray:
        """The diffusion coefficient ``sigma_t``."""

    @abstractmethod
    def variance(self, t: np.ndarray) -> np.ndarray:
        """The accumulated variance ``int_0^t sigma_s^2 ds``."""

    @property
    def constant(self) -> float | None:
        """The value of ``sigma_t`` if it does not depend on time."""
        return None


class EdmSchedule(NoiseSchedule):
    """``sigma_t = sqrt(2 t)``, so the marginal standard deviation added by time ``t``
    is ``t``.
    """

    name = "edm"

    def sigma(self, t):
        return np.sqrt(2.0 * np.asarray(t, dtype=float))

    def variance(self, t):
        return np.asarray(t, dtype=float) ** 2


class ConstantSchedule(NoiseSchedule):
    name = "constant"

    def __init__(self, value: float):
        if value <= 0:
            raise InvalidScheduleError("A constant diffusion coefficient must be positive")

        self.value = float(value)

    def sigma(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)

    def variance(self, t):
        return self.value**2 * np.asarray(t, dtype=float)

    @property
    def constant(self) -> float:
        return self.value


def build_noise_schedule(name: str, value: float | None = None) -> NoiseSchedule:
    match name:
        case "edm":
            return EdmSchedule()
        case "constant":
            return ConstantSchedule(1.0 if value is None else value)

    raise InvalidScheduleError(f"Unknown noise schedule '{name}'")


def linear_mask_rate(t: np.ndarray) -> np.ndarray:
    """The masking rate ``1 / (1 - t)`` whose survival probability is ``1 - t``."""
    return 1.0 / (1.0 - np.minimum(t, 1.0 - MASK_CLIP))


def masking_rate(t, beta_schedule=linear_mask_rate) -> np.ndarray:
    """Return the rate at which an unmasked token jumps to the mask at time ``t``.

    :param t: diffusion times in ``[0, 1]``
    :param beta_schedule: the rate function, linear masking by default
    """
    t = np.asarray(t, dtype=float)

    if np.any(t < 0) or np.any(t > 1):
        raise InvalidScheduleError("Masking times must lie in [0, 1]")

    rate = np.asarray(beta_schedule(t), dtype=float)

    if np.any(rate < 0):
        raise InvalidScheduleError("Masking rates must be non-negative")

    return rate
