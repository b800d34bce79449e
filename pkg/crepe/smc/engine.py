"""Sequential Monte Carlo along the same annealing path as replica exchange.

Particles start at the top level and are moved down one level at a time by the
task's backward proposal, reweighted by the same path estimators the swap
acceptance uses, and resampled when their effective sample size drops.
"""

from dataclasses import dataclass, field

import numpy as np
from structlog import get_logger

from crepe.control.acceptance import smc_log_increment
from crepe.control.tasks import ControlTask
from crepe.core.grid import TimeGrid
from crepe.core.rng import StreamPurpose, stream
from crepe.diffusion.discrete import DEFAULT_KERNEL, KernelOptions
from crepe.errors import ConfigError
from crepe.pt.engine import Ladder
from crepe.smc.particles import ParticleSystem, ess, partial_resample, systematic_resample

logger = get_logger("smc.engine")


@dataclass(frozen=True)
class PartialResampling:
    fraction: float
    """The share of lowest-weight particles replaced when resampling."""

    ess_threshold: float = 1.0

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ConfigError("The partial resampling fraction must lie in (0, 1]")

        if not 0 < self.ess_threshold <= 1:
            raise ConfigError("ess_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class SmcConfig:
    grid: TimeGrid

    particles: int
    """Particles per batch."""

    batches: int = 1

    ess_threshold: float = 1.0
    """Resample when the normalized effective sample size is at or below this value."""

    partial: PartialResampling | None = None

    use_reference: bool = False
    kernel: KernelOptions = DEFAULT_KERNEL
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1 or self.batches < 1:
            raise ConfigError("particles and batches must be positive integers")

        if not 0 < self.ess_threshold <= 1:
            raise ConfigError("ess_threshold must lie in (0, 1]")

    @property
    def threshold(self) -> float:
        return self.ess_threshold if self.partial is None else self.partial.ess_threshold


@dataclass
class SmcDiagnostics:
    nfe: int = 0
    """Score evaluations spent moving particles between levels."""

    completion_nfe: int = 0

    resample_count: int = 0

    ess_history: list[list[float]] = field(default_factory=list)
    """The normalized effective sample size after every level, per batch."""

    def to_dict(self) -> dict:
        return {
            "nfe": self.nfe,
            "completion_nfe": self.completion_nfe,
            "resample_count": self.resample_count,
            "ess_history": self.ess_history,
        }


@dataclass
class SmcResult:
    samples: np.ndarray
    """Every batch's particles at ``t_min``, concatenated."""

    log_weights: np.ndarray
    """Log weights normalized within each batch."""

    batch_index: np.ndarray
    diagnostics: SmcDiagnostics
    ancestry: list[list[np.ndarray]]


def smc_propagate_and_weight(
    system: ParticleSystem,
    m: int,
    ladder: Ladder,
    noise: np.ndarray,
) -> ParticleSystem:
    """Move particles from level ``m`` to ``m - 1`` and multiply in the incremental
    weights.
    """
    path = ladder.simulate(
        system.particles,
        ladder.grid.segment_times(m),
        ladder.proposal.backward,
        noise,
    )

    increment = smc_log_increment(ladder.task, path, ladder.rnes(path))

    return ParticleSystem(path.start, system.log_weights + increment, system.ancestry)


def _maybe_resample(
    system: ParticleSystem,
    m: int,
    batch: int,
    config: SmcConfig,
    diagnostics: SmcDiagnostics,
) -> ParticleSystem:
    _, fraction = ess(system.log_weights)

    if system.size == 1 or fraction > config.threshold:
        return system

    diagnostics.resample_count += 1
    rng = stream(config.seed, m, batch, StreamPurpose.RESAMPLE)

    logger.debug("Resampling particles", level=m, batch=batch, ess=round(fraction, 4))

    if config.partial is None:
        return systematic_resample(system, rng)

    return partial_resample(system, config.partial.fraction, rng)


def smc_run(task: ControlTask, config: SmcConfig) -> SmcResult:
    """Run ``config.batches`` independent particle systems down the annealing path."""
    grid = config.grid
    top = grid.num_levels
    steps = grid.substeps_per_level

    ladder = Ladder.build(task, grid, config.use_reference, config.kernel)
    diagnostics = SmcDiagnostics()

    logger.info(
        "Starting SMC",
        task=task.kind,
        levels=top,
        particles=config.particles,
        batches=config.batches,
    )

    samples, weights, ancestry = [], [], []

    for batch in range(config.batches):
        rng = stream(config.seed, top, batch, StreamPurpose.INIT)
        system = ParticleSystem(
            ladder.top.sample(config.particles, rng),
            np.zeros(config.particles),
        )
        history = []

        for m in range(top, 0, -1):
            rng = stream(config.seed, m, batch, StreamPurpose.PROPAGATE)
            system = smc_propagate_and_weight(
                system,
                m,
                ladder,
                ladder.draw(rng, config.particles, steps),
            )
            diagnostics.nfe += steps * config.particles

            history.append(ess(system.log_weights)[1])

            if m > 1:
                system = _maybe_resample(system, m, batch, config, diagnostics)

        rng = stream(config.seed, 0, batch, StreamPurpose.COMPLETE)
        completed, nfe = ladder.complete(system.particles, rng)
        diagnostics.completion_nfe += nfe

        samples.append(completed)
        weights.append(system.normalized_log_weights())
        ancestry.append(system.ancestry)
        diagnostics.ess_history.append(history)

        logger.debug("Finished SMC batch", batch=batch, final_ess=history[-1] if history else 1.0)

    logger.info(
        "Finished SMC",
        nfe=diagnostics.nfe,
        resample_count=diagnostics.resample_count,
    )

    return SmcResult(
        np.concatenate(samples),
        np.concatenate(weights),
        np.repeat(np.arange(config.batches), config.particles),
        diagnostics,
        ancestry,
    )
