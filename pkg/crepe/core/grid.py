"""Annealing time grids.

A grid stores every diffusion sub-time in ascending order. PT levels sit every
``substeps_per_level`` sub-times above the truncation index; the sub-times below
the truncation index are only used to complete level-0 samples down to ``t_min``.
"""

from dataclasses import dataclass

import numpy as np

from crepe.errors import InvalidScheduleError


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """A discretized annealing schedule with ``M`` levels of ``K`` sub-steps each."""

    times: np.ndarray
    """Every diffusion sub-time, strictly increasing, from ``t_min`` to ``t_max``."""

    substeps_per_level: int = 1
    """The number of sub-steps ``K`` between adjacent levels."""

    truncation_index: int = 0
    """The index into ``times`` of the lowest PT level."""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)

        if times.ndim != 1 or times.size < 1:
            raise InvalidScheduleError("Grid times must be a non-empty 1-D sequence")

        if np.any(np.diff(times) <= 0):
            raise InvalidScheduleError("Grid times must be strictly increasing")

        if self.substeps_per_level < 1:
            raise InvalidScheduleError("substeps_per_level must be a positive integer")

        if not 0 <= self.truncation_index < times.size:
            raise InvalidScheduleError("truncation_index lies outside the grid")

        if (times.size - 1 - self.truncation_index) % self.substeps_per_level:
            raise InvalidScheduleError(
                "The sub-steps above the truncation time are not divisible by "
                f"substeps_per_level={self.substeps_per_level}",
            )

        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented

        return (
            self.substeps_per_level == other.substeps_per_level
            and self.truncation_index == other.truncation_index
            and np.array_equal(self.times, other.times)
        )

    def __hash__(self) -> int:
        return hash((self.times.tobytes(), self.substeps_per_level, self.truncation_index))

    @property
    def levels(self) -> np.ndarray:
        """The level times ``t_0 < ... < t_M``."""
        return self.times[self.truncation_index :: self.substeps_per_level]

    @property
    def num_levels(self) -> int:
        """``M``, the index of the reference level."""
        return self.levels.size - 1

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def truncation_time(self) -> float:
        return float(self.times[self.truncation_index])

    def segment_times(self, m: int | np.ndarray) -> np.ndarray:
        """Return the sub-times of the segments ``[t_{m-1}, t_m]``.

        :param m: a level index ``1 <= m <= M`` or an array of them
        :return: shape ``(K + 1,)`` for a scalar level, ``(len(m), K + 1)`` otherwise
        """
        m = np.asarray(m)

        if np.any(m < 1) or np.any(m > self.num_levels):
            raise InvalidScheduleError(f"No segment below level {m}")

        start = self.truncation_index + (m - 1) * self.substeps_per_level
        offsets = np.arange(self.substeps_per_level + 1)

        return self.times[start[..., None] + offsets]

    def completion_times(self) -> np.ndarray:
        """The sub-times from ``t_min`` to the truncation time."""
        return self.times[: self.truncation_index + 1]

    def level_step(self, m: int) -> float:
        """The sub-step size adjacent to level ``m`` used by local moves.

        Level 0 uses the sub-step above it, every other level the one below it.
        """
        index = self.truncation_index + m * self.substeps_per_level

        if index == 0:
            return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

        return float(self.times[index] - self.times[index - 1])

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "substeps_per_level": self.substeps_per_level,
            "truncation_index": self.truncation_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TimeGrid":
        return cls(
            np.asarray(data["times"], dtype=float),
            data["substeps_per_level"],
            data["truncation_index"],
        )


def edm_times(t_min: float, t_max: float, n_steps: int, rho: float) -> np.ndarray:
    """Return the ``n_steps + 1`` raw power-interpolated times from ``t_max`` down to
    ``t_min``.
    """
    i = np.arange(n_steps + 1)
    inv_rho = 1.0 / rho

    raw = (t_max**inv_rho + i / n_steps * (t_min**inv_rho - t_max**inv_rho)) ** rho

    # Pin the endpoints against rounding in the power interpolant.
    raw[0] = t_max
    raw[-1] = t_min

    return raw


def build_edm_grid(
    t_min: float,
    t_max: float,
    n_steps: int,
    rho: float,
    substeps_per_level: int = 1,
    truncation_index: int = 0,
) -> TimeGrid:
    """Build a grid from the power-interpolated EDM time discretization.

    :param t_min: the smallest diffusion time
    :param t_max: the reference time
    :param n_steps: the number of diffusion sub-steps
    :param rho: the interpolation exponent
    :param substeps_per_level: sub-steps per PT level
    :param truncation_index: sub-steps below the lowest PT level
    """
    if t_min <= 0:
        raise InvalidScheduleError("t_min must be positive")

    if t_max <= t_min:
        raise InvalidScheduleError("t_max must be greater than t_min")

    if n_steps < 2:
        raise InvalidScheduleError("n_steps must be at least 2")

    if rho < 1:
        raise InvalidScheduleError("rho must be at least 1")

    return TimeGrid(
        edm_times(t_min, t_max, n_steps, rho)[::-1].copy(),
        substeps_per_level,
        truncation_index,
    )


def build_uniform_grid(
    t_min: float,
    t_max: float,
    n_steps: int,
    substeps_per_level: int = 1,
    truncation_index: int = 0,
) -> TimeGrid:
    """Build an equally spaced grid. Used for masking diffusions on ``[0, 1]``."""
    if t_min < 0:
        raise InvalidScheduleError("t_min must be non-negative")

    if t_max <= t_min:
        raise InvalidScheduleError("t_max must be greater than t_min")

    if n_steps < 1:
        raise InvalidScheduleError("n_steps must be at least 1")

    times = np.linspace(t_min, t_max, n_steps + 1)
    times[-1] = t_max

    return TimeGrid(times, substeps_per_level, truncation_index)


def build_level_grid(
    levels: np.ndarray,
    substeps_per_level: int = 1,
) -> TimeGrid:
    """Subdivide every interval between the given level times into equal sub-steps."""
    levels = np.asarray(levels, dtype=float)

    if levels.ndim != 1 or levels.size < 1 or np.any(np.diff(levels) <= 0):
        raise InvalidScheduleError("Level times must be strictly increasing")

    if levels.size == 1:
        return TimeGrid(levels, substeps_per_level)

    fractions = np.arange(substeps_per_level) / substeps_per_level
    inner = levels[:-1, None] + fractions * np.diff(levels)[:, None]

    return TimeGrid(np.append(inner.ravel(), levels[-1]), substeps_per_level)
