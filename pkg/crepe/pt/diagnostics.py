"""Run statistics of the replica exchange engine."""

from dataclasses import dataclass

import numpy as np

_UNSEEN, _LEFT_BOTTOM, _REACHED_TOP = 0, 1, 2


@dataclass
class Diagnostics:
    """Swap acceptance, round trips and evaluation counts.

    A round trip is counted each time a replica that has visited level ``0`` reaches
    level ``M`` and then returns to level ``0``.
    """

    num_levels: int

    proposed: np.ndarray = None
    """Swap proposals per pair ``(m - 1, m)``, indexed by ``m - 1``."""

    accepted: np.ndarray = None

    round_trips: np.ndarray = None
    """Completed round trips per replica."""

    phases: np.ndarray = None

    nfe: int = 0
    """Score evaluations spent simulating swap proposals."""

    init_nfe: int = 0
    completion_nfe: int = 0
    local_nfe: int = 0

    rejected_nonfinite: int = 0
    """Swaps rejected because a path estimate was not finite."""

    skipped_local: int = 0

    reward_evaluations: int = 0

    def __post_init__(self):
        size = self.num_levels + 1

        if self.proposed is None:
            self.proposed = np.zeros(self.num_levels, dtype=np.int64)

        if self.accepted is None:
            self.accepted = np.zeros(self.num_levels, dtype=np.int64)

        if self.round_trips is None:
            self.round_trips = np.zeros(size, dtype=np.int64)

        if self.phases is None:
            self.phases = np.zeros(size, dtype=np.int64)

    @property
    def acceptance_rates(self) -> np.ndarray:
        """The empirical swap acceptance of every pair. Unproposed pairs report zero."""
        return np.divide(
            self.accepted,
            self.proposed,
            out=np.zeros(self.num_levels),
            where=self.proposed > 0,
        )

    @property
    def rejection_rates(self) -> np.ndarray:
        return np.where(self.proposed > 0, 1.0 - self.acceptance_rates, 0.0)

    @property
    def total_round_trips(self) -> int:
        return int(self.round_trips.sum())

    @property
    def global_barrier(self) -> float:
        """The summed rejection rate, an estimate of the communication barrier."""
        return float(self.rejection_rates.sum())

    def record_swaps(self, pairs: np.ndarray, accepted: np.ndarray):
        np.add.at(self.proposed, pairs - 1, 1)
        np.add.at(self.accepted, pairs - 1, accepted.astype(np.int64))

    def update_round_trips(self, replica_ids: np.ndarray):
        """Advance the round-trip state of every replica from its current level."""
        if self.num_levels == 0:
            return

        bottom = replica_ids[0]
        top = replica_ids[self.num_levels]

        if self.phases[bottom] == _REACHED_TOP:
            self.round_trips[bottom] += 1

        self.phases[bottom] = _LEFT_BOTTOM

        if self.phases[top] == _LEFT_BOTTOM:
            self.phases[top] = _REACHED_TOP

    def to_dict(self) -> dict:
        return {
            "num_levels": self.num_levels,
            "proposed": self.proposed.tolist(),
            "accepted": self.accepted.tolist(),
            "acceptance_rates": self.acceptance_rates.tolist(),
            "round_trips": self.round_trips.tolist(),
            "phases": self.phases.tolist(),
            "total_round_trips": self.total_round_trips,
            "global_barrier": self.global_barrier,
            "nfe": self.nfe,
            "init_nfe": self.init_nfe,
            "completion_nfe": self.completion_nfe,
            "local_nfe": self.local_nfe,
            "rejected_nonfinite": self.rejected_nonfinite,
            "skipped_local": self.skipped_local,
            "reward_evaluations": self.reward_evaluations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostics":
        return cls(
            num_levels=data["num_levels"],
            proposed=np.asarray(data["proposed"], dtype=np.int64),
            accepted=np.asarray(data["accepted"], dtype=np.int64),
            round_trips=np.asarray(data["round_trips"], dtype=np.int64),
            phases=np.asarray(data["phases"], dtype=np.int64),
            nfe=data["nfe"],
            init_nfe=data["init_nfe"],
            completion_nfe=data["completion_nfe"],
            local_nfe=data["local_nfe"],
            rejected_nonfinite=data["rejected_nonfinite"],
            skipped_local=data["skipped_local"],
            reward_evaluations=data["reward_evaluations"],
        )
