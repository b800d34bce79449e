"""Counter-based random streams.

Every draw in the samplers comes from a stream keyed by ``(seed, level, iteration,
purpose)``. Streams do not depend on the order in which levels are processed or on
the number of workers.
"""

from dataclasses import dataclass
from enum import IntEnum

from numpy.random import Generator, Philox, SeedSequence


class StreamPurpose(IntEnum):
    """What a random stream is used for."""

    INIT = 0
    FORWARD = 1
    BACKWARD = 2
    ACCEPT = 3
    LOCAL = 4
    RESAMPLE_TOP = 5
    COMPLETE = 6
    PROPAGATE = 7
    RESAMPLE = 8
    ORACLE = 9


@dataclass(frozen=True)
class RngStream:
    seed: int
    """The 64-bit run seed."""

    level: int
    iteration: int
    purpose: StreamPurpose

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

        if self.level < 0 or self.iteration < 0:
            raise ValueError("level and iteration must be non-negative")

    @property
    def stream_id(self) -> tuple[int, int, int]:
        return self.level, self.iteration, int(self.purpose)

    def generator(self) -> Generator:
        """Return a fresh generator positioned at the start of the stream."""
        return Generator(Philox(SeedSequence(self.seed, spawn_key=self.stream_id)))


def stream(seed: int, level: int, iteration: int, purpose: StreamPurpose) -> Generator:
    """Return the generator for one stream."""
    return RngStream(seed, level, iteration, purpose).generator()
