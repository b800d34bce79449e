"""Log-domain arithmetic and path-estimator values."""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy import special

from crepe.errors import NumericalError


class ProcessTag(StrEnum):
    """The process a path estimator belongs to."""

    PRETRAINED = "pretrained"
    PROPOSAL = "proposal"
    REFERENCE = "reference"


def logsumexp(values, axis: int | None = None) -> float | np.ndarray:
    """Return ``log(sum(exp(values)))`` with the maximum subtracted first.

    :param values: log-domain values
    :param axis: the axis to reduce, or ``None`` for all values
    """
    values = np.asarray(values, dtype=float)

    if values.size == 0:
        raise NumericalError("logsumexp of an empty sequence")

    result = special.logsumexp(values, axis=axis)

    if np.ndim(result) == 0:
        return float(result)

    return result


@dataclass(frozen=True)
class LogRne:
    """A log Radon-Nikodym estimate over a path segment, batched over paths."""

    value: np.ndarray
    """``log R`` per path. ``-inf`` marks a zero-probability transition."""

    process_tag: ProcessTag
    """Which process the estimate belongs to."""

    label: str = ""
    """The model the estimate was computed for, if any."""

    @property
    def is_zero_probability(self) -> np.ndarray:
        return np.isneginf(self.value)

    @property
    def is_finite(self) -> np.ndarray:
        return np.isfinite(self.value)

    def __add__(self, other: "LogRne") -> "LogRne":
        if other.process_tag != self.process_tag:
            raise ValueError("Cannot compose estimates of different processes")

        return LogRne(self.value + other.value, self.process_tag, self.label)
