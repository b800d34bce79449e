from dataclasses import dataclass
from enum import StrEnum

from crepe.control.tasks import OnlineEvent
from crepe.core.grid import TimeGrid
from crepe.diffusion.discrete import DEFAULT_KERNEL, KernelOptions
from crepe.errors import ConfigError

BURN_IN_FRACTION = 0.02
"""The share of iterations discarded when no burn-in is given."""


class LocalMove(StrEnum):
    OFF = "off"
    ULA = "ula"
    CTMC_MH = "ctmc_mh"


class CtmcProposal(StrEnum):
    """The symmetric proposal of discrete local Metropolis-Hastings moves."""

    UNIFORM = "uniform"
    """Change one token to any other vocabulary entry."""

    MASKING = "masking"
    """Mask an unmasked token or unmask a masked one."""


class InitProcess(StrEnum):
    """The backward process the ensemble is initialized with."""

    PROPOSAL = "proposal"
    PRETRAINED = "pretrained"


@dataclass(frozen=True)
class EngineConfig:
    """Settings of a replica exchange run."""

    grid: TimeGrid

    iterations: int
    """The number of communication sweeps ``N``."""

    burn_in: int | None = None
    """Iterations whose samples are discarded. Two percent of ``N`` when unset."""

    local_move: LocalMove = LocalMove.OFF
    ctmc_proposal: CtmcProposal = CtmcProposal.UNIFORM

    resample_top_level: bool = False
    """Redraw the top level from its reference after every sweep."""

    use_reference: bool = False
    """Measure continuous path estimators against a Gaussian reference diffusion."""

    kernel: KernelOptions = DEFAULT_KERNEL

    online_events: tuple[OnlineEvent, ...] = ()

    init_process: InitProcess = InitProcess.PROPOSAL

    seed: int = 0

    workers: int = 1
    """Threads that evaluate swap proposals. Results do not depend on it."""

    checkpoint_every: int = 0
    """Iterations between checkpoints. Zero disables checkpointing."""

    log_every: int = 100

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")

        if self.burn_in is None:
            object.__setattr__(self, "burn_in", int(BURN_IN_FRACTION * self.iterations))

        if not 0 <= self.burn_in <= self.iterations:
            raise ConfigError("burn_in must lie between 0 and the number of iterations")

        if self.workers < 1:
            raise ConfigError("workers must be a positive integer")

        if self.checkpoint_every < 0 or self.log_every < 1:
            raise ConfigError("checkpoint_every must be non-negative and log_every positive")

        if any(e.iteration < 1 for e in self.online_events):
            raise ConfigError("Online events must start at iteration 1 or later")
