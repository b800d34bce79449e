from dataclasses import dataclass, replace
from enum import StrEnum

import numpy as np


class Direction(StrEnum):
    """The direction of diffusion time a process or path moves in."""

    FORWARD = "forward"
    """Noising, from ``t`` towards ``t'``."""

    BACKWARD = "backward"
    """Denoising, from ``t'`` towards ``t``."""


@dataclass(frozen=True)
class PathSegment:
    """A batch of simulated paths over ``[t, t']``.

    States are stored in ascending time order regardless of the direction that
    generated them.
    """

    times: np.ndarray
    """Sub-times with shape ``(batch, K + 1)``."""

    states: np.ndarray
    """States with shape ``(batch, K + 1, *event_shape)``."""

    direction: Direction
    """Which proposal generated the path."""

    def __post_init__(self):
        if self.times.ndim != 2:
            raise ValueError("Path times must have shape (batch, K + 1)")

        if self.states.shape[:2] != self.times.shape:
            raise ValueError(
                f"Path states {self.states.shape[:2]} do not match times {self.times.shape}",
            )

        if np.any(np.diff(self.times, axis=1) <= 0):
            raise ValueError("Path times must be strictly increasing")

    @classmethod
    def single(cls, times, states, direction: Direction) -> "PathSegment":
        """Create a batch holding one path."""
        return cls(
            np.asarray(times, dtype=float)[None],
            np.asarray(states)[None],
            direction,
        )

    @property
    def batch_size(self) -> int:
        return self.times.shape[0]

    @property
    def num_steps(self) -> int:
        return self.times.shape[1] - 1

    @property
    def start(self) -> np.ndarray:
        """The states at ``t``."""
        return self.states[:, 0]

    @property
    def end(self) -> np.ndarray:
        """The states at ``t'``."""
        return self.states[:, -1]

    def sub_segment(self, first: int, last: int) -> "PathSegment":
        """Return the segment between sub-step indices ``first`` and ``last``."""
        return replace(
            self,
            times=self.times[:, first : last + 1],
            states=self.states[:, first : last + 1],
        )

    def select(self, rows: np.ndarray) -> "PathSegment":
        return replace(self, times=self.times[rows], states=self.states[rows])


@dataclass(frozen=True)
class ReplicaEnsemble:
    """One state per PT level and the replica occupying it."""

    states: np.ndarray
    """States with shape ``(M + 1, *event_shape)``; ``states[m]`` lives at ``t_m``."""

    replica_ids: np.ndarray
    """A permutation of ``0..M``."""

    iteration: int = 0
    """The last completed iteration."""

    def __post_init__(self):
        if self.states.shape[0] != self.replica_ids.shape[0]:
            raise ValueError("Every level needs exactly one replica id")

        if not np.array_equal(
            np.sort(self.replica_ids),
            np.arange(self.replica_ids.shape[0]),
        ):
            raise ValueError("replica_ids must be a permutation of the levels")

        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")

    @property
    def num_levels(self) -> int:
        return self.states.shape[0] - 1

    def evolve(
        self,
        states: np.ndarray | None = None,
        replica_ids: np.ndarray | None = None,
        iteration: int | None = None,
    ) -> "ReplicaEnsemble":
        """Return a copy with the given fields replaced."""
        return ReplicaEnsemble(
            self.states if states is None else states,
            self.replica_ids if replica_ids is None else replica_ids,
            self.iteration if iteration is None else iteration,
        )
