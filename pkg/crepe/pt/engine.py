"""Accelerated replica exchange over a ladder of diffusion times.

Each iteration proposes swaps between alternating pairs of adjacent levels by
simulating a noising path up from the lower level and a denoising path down from the
upper level, then optionally explores every level locally. Level-0 states are
completed down to ``t_min`` and collected as samples after burn-in.
"""

from collections.abc import Callable
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator
from structlog import get_logger

from crepe.control.acceptance import PathRnes, path_rnes, swap_log_accept
from crepe.control.proposals import Process, ProcessPair, pretrained_pair, proposal_pair
from crepe.control.tasks import (
    ControlTask,
    TaskTimeline,
    TopReference,
    reference_for,
    top_reference,
)
from crepe.core.grid import TimeGrid
from crepe.core.paths import PathSegment, ReplicaEnsemble
from crepe.core.rng import StreamPurpose, stream
from crepe.diffusion.discrete import DEFAULT_KERNEL, KernelOptions, simulate_ctmc_path
from crepe.diffusion.gaussian import simulate_path
from crepe.diffusion.reference import ReferenceProcess
from crepe.errors import ConfigError, NonFiniteStateError
from crepe.pt.config import CtmcProposal, EngineConfig, InitProcess, LocalMove
from crepe.pt.diagnostics import Diagnostics
from crepe.pt.local import ctmc_mh_sweep, langevin_move, langevin_step_size

logger = get_logger("pt.engine")


@dataclass(frozen=True, eq=False)
class Ladder:
    """The processes and estimators shared by every level for one task."""

    task: ControlTask
    grid: TimeGrid
    proposal: ProcessPair
    pretrained: tuple[ProcessPair, ...]
    top: TopReference
    reference: ReferenceProcess | None = None
    kernel: KernelOptions = DEFAULT_KERNEL

    @classmethod
    def build(
        cls,
        task: ControlTask,
        grid: TimeGrid,
        use_reference: bool = False,
        kernel: KernelOptions = DEFAULT_KERNEL,
    ) -> "Ladder":
        return cls(
            task,
            grid,
            proposal_pair(task),
            tuple(pretrained_pair(m) for m in task.models),
            top_reference(task, grid.t_max),
            reference_for(task) if use_reference else None,
            kernel,
        )

    @property
    def event_size(self) -> int:
        model = self.task.models[0]

        return model.num_tokens if self.task.is_discrete else model.dim

    def draw(self, rng: Generator, batch: int, steps: int) -> np.ndarray:
        """Pre-draw the noise of ``batch`` paths of ``steps`` sub-steps."""
        shape = (batch, steps, self.event_size)

        return rng.random(shape) if self.task.is_discrete else rng.standard_normal(shape)

    def simulate(
        self,
        x: np.ndarray,
        times: np.ndarray,
        process: Process,
        noise: np.ndarray,
    ) -> PathSegment:
        if self.task.is_discrete:
            return simulate_ctmc_path(x, times, process, uniforms=noise, options=self.kernel)

        return simulate_path(x, times, process, noise=noise)

    def rnes(self, path: PathSegment) -> PathRnes:
        return path_rnes(path, self.proposal, self.pretrained, self.reference, self.kernel)

    def complete(self, x: np.ndarray, rng: Generator) -> tuple[np.ndarray, int]:
        """Denoise states at the truncation time down to ``t_min``.

        :return: the completed states and the score evaluations spent
        """
        times = self.grid.completion_times()
        steps = times.size - 1

        if steps == 0:
            return x, 0

        path = self.simulate(x, times, self.proposal.backward, self.draw(rng, x.shape[0], steps))

        return path.start, steps * x.shape[0]


@dataclass
class EngineState:
    """Everything needed to continue a run after its last completed iteration."""

    ensemble: ReplicaEnsemble
    diagnostics: Diagnostics
    samples: list[np.ndarray] = field(default_factory=list)
    sample_iterations: list[int] = field(default_factory=list)
    sample_replicas: list[int] = field(default_factory=list)
    """The replica at level 0 when each sample was taken."""


@dataclass
class PtResult:
    samples: np.ndarray
    """Completed level-0 states collected after burn-in, one per iteration."""

    sample_iterations: np.ndarray
    sample_replicas: np.ndarray
    ensemble: ReplicaEnsemble
    diagnostics: Diagnostics
    task: ControlTask
    """The task in force at the last iteration."""


def init_ensemble(ladder: Ladder, config: EngineConfig) -> tuple[ReplicaEnsemble, int]:
    """Draw the top level from its reference and denoise it down through every level.

    :return: the ensemble and the score evaluations spent
    """
    grid = ladder.grid
    top = grid.num_levels
    steps = grid.substeps_per_level

    backward = (
        ladder.proposal.backward
        if config.init_process == InitProcess.PROPOSAL
        else ladder.pretrained[0].backward
    )

    first = ladder.top.sample(1, stream(config.seed, top, 0, StreamPurpose.INIT))
    states = np.empty((top + 1, *first.shape[1:]), dtype=first.dtype)
    states[top] = first[0]

    for m in range(top, 0, -1):
        noise = ladder.draw(stream(config.seed, m - 1, 0, StreamPurpose.INIT), 1, steps)
        path = ladder.simulate(states[m][None], grid.segment_times(m), backward, noise)

        if not np.all(np.isfinite(path.start)):
            raise NonFiniteStateError("Initialization produced a non-finite state", m - 1, 0)

        states[m - 1] = path.start[0]

    return ReplicaEnsemble(states, np.arange(top + 1)), top * steps


def swap_pairs(iteration: int, num_levels: int) -> np.ndarray:
    """The upper levels ``m`` of the pairs proposed at ``iteration``, with
    ``m = iteration (mod 2)``.
    """
    return np.arange(2 - iteration % 2, num_levels + 1, 2)


def _evaluate_pairs(
    ladder: Ladder,
    states: np.ndarray,
    pairs: np.ndarray,
    iteration: int,
    seed: int,
):
    steps = ladder.grid.substeps_per_level
    times = ladder.grid.segment_times(pairs)

    def noise(purpose: StreamPurpose) -> np.ndarray:
        return np.concatenate(
            [ladder.draw(stream(seed, int(m), iteration, purpose), 1, steps) for m in pairs],
        )

    forward = ladder.simulate(
        states[pairs - 1],
        times,
        ladder.proposal.forward,
        noise(StreamPurpose.FORWARD),
    )
    backward = ladder.simulate(
        states[pairs],
        times,
        ladder.proposal.backward,
        noise(StreamPurpose.BACKWARD),
    )

    forward_rnes = ladder.rnes(forward)
    backward_rnes = ladder.rnes(backward)

    log_alpha = swap_log_accept(ladder.task, forward, backward, forward_rnes, backward_rnes)
    nonfinite = ~(forward_rnes.is_finite & backward_rnes.is_finite)

    return log_alpha, forward.end, backward.start, nonfinite


def communication_sweep(
    ensemble: ReplicaEnsemble,
    iteration: int,
    ladder: Ladder,
    config: EngineConfig,
    diagnostics: Diagnostics,
    executor: Executor | None = None,
) -> ReplicaEnsemble:
    """Propose and accept swaps between every pair of the non-reversible schedule.

    Pairs are split into one chunk per worker. Every pair draws from its own random
    streams, so the result does not depend on the chunking.
    """
    pairs = swap_pairs(iteration, ladder.grid.num_levels)

    if pairs.size == 0:
        return ensemble.evolve(iteration=iteration)

    chunks = [c for c in np.array_split(pairs, config.workers) if c.size]

    def evaluate(chunk):
        return _evaluate_pairs(ladder, ensemble.states, chunk, iteration, config.seed)

    mapper = executor.map if executor is not None and len(chunks) > 1 else map
    results = list(mapper(evaluate, chunks))

    log_alpha = np.concatenate([r[0] for r in results])
    raised = np.concatenate([r[1] for r in results])
    lowered = np.concatenate([r[2] for r in results])
    nonfinite = np.concatenate([r[3] for r in results])

    uniforms = np.array(
        [stream(config.seed, int(m), iteration, StreamPurpose.ACCEPT).random() for m in pairs],
    )

    with np.errstate(divide="ignore"):
        accept = np.log(uniforms) < log_alpha

    states = ensemble.states.copy()
    ids = ensemble.replica_ids.copy()
    upper = pairs[accept]

    states[upper - 1] = lowered[accept]
    states[upper] = raised[accept]
    ids[upper - 1], ids[upper] = ensemble.replica_ids[upper], ensemble.replica_ids[upper - 1]

    diagnostics.record_swaps(pairs, accept)
    diagnostics.nfe += 2 * ladder.grid.substeps_per_level * pairs.size

    if np.any(nonfinite):
        diagnostics.rejected_nonfinite += int(nonfinite.sum())
        logger.warning(
            "Rejected swaps with non-finite path estimates",
            iteration=iteration,
            pairs=pairs[nonfinite].tolist(),
        )

    return ensemble.evolve(states=states, replica_ids=ids, iteration=iteration)


def local_explore(
    ensemble: ReplicaEnsemble,
    iteration: int,
    ladder: Ladder,
    config: EngineConfig,
    diagnostics: Diagnostics,
) -> ReplicaEnsemble:
    """Apply the configured local move at every level and redraw the top level if
    requested.
    """
    grid = ladder.grid
    top = grid.num_levels

    if config.local_move == LocalMove.OFF and not config.resample_top_level:
        return ensemble

    states = ensemble.states.copy()
    explore = np.arange(top if config.resample_top_level else top + 1)
    times = grid.levels[explore]
    dt = np.array([grid.level_step(int(m)) for m in explore])

    def rngs():
        return [stream(config.seed, int(m), iteration, StreamPurpose.LOCAL) for m in explore]

    if config.local_move == LocalMove.ULA and explore.size:
        sigma = ladder.task.models[0].schedule.sigma(times)
        noise = np.stack([rng.standard_normal(ladder.event_size) for rng in rngs()])

        moved, skipped = langevin_move(
            ladder.task,
            states[explore],
            times,
            langevin_step_size(sigma, dt),
            noise,
        )

        states[explore] = moved
        diagnostics.local_nfe += explore.size

        if np.any(skipped):
            diagnostics.skipped_local += int(skipped.sum())
            logger.warning(
                "Skipped non-finite local moves",
                iteration=iteration,
                levels=explore[skipped].tolist(),
            )

    elif config.local_move == LocalMove.CTMC_MH and explore.size:
        h = dt if config.ctmc_proposal == CtmcProposal.MASKING else np.ones_like(dt)
        uniforms = np.stack([rng.random(ladder.event_size) for rng in rngs()])

        states[explore] = ctmc_mh_sweep(
            ladder.task,
            states[explore],
            times,
            h,
            config.ctmc_proposal,
            uniforms,
        )
        diagnostics.local_nfe += explore.size * ladder.event_size

    if config.resample_top_level:
        rng = stream(config.seed, top, iteration, StreamPurpose.RESAMPLE_TOP)
        states[top] = ladder.top.sample(1, rng)[0]

    return ensemble.evolve(states=states)


def _check_local_move(task: ControlTask, config: EngineConfig):
    if config.local_move == LocalMove.ULA and task.is_discrete:
        raise ConfigError("Langevin local moves need a continuous task")

    if config.local_move == LocalMove.CTMC_MH and not task.is_discrete:
        raise ConfigError("Discrete Metropolis-Hastings moves need a discrete task")


def run(
    task: ControlTask,
    config: EngineConfig,
    state: EngineState | None = None,
    on_checkpoint: Callable[[EngineState], None] | None = None,
) -> PtResult:
    """Run replica exchange until ``config.iterations`` sweeps have completed.

    :param task: the control task at iteration zero
    :param config: the engine settings
    :param state: a state to continue from instead of initializing
    :param on_checkpoint: called with the current state every
        ``config.checkpoint_every`` iterations
    """
    _check_local_move(task, config)

    grid = config.grid
    timeline = TaskTimeline(task, config.online_events)

    def ladder_at(iteration: int) -> Ladder:
        return Ladder.build(timeline.at(iteration), grid, config.use_reference, config.kernel)

    if state is None:
        ladder = ladder_at(0)
        ensemble, init_nfe = init_ensemble(ladder, config)

        state = EngineState(ensemble, Diagnostics(grid.num_levels, init_nfe=init_nfe))
        state.diagnostics.update_round_trips(ensemble.replica_ids)
    else:
        ladder = ladder_at(state.ensemble.iteration)

    diagnostics = state.diagnostics
    ensemble = state.ensemble
    event_index = timeline.index_at(ensemble.iteration)

    counter = task.reward.counter if task.has_reward else None
    counted = counter.value if counter is not None else 0
    previous_evaluations = diagnostics.reward_evaluations

    def sync_evaluations():
        if counter is not None:
            diagnostics.reward_evaluations = previous_evaluations + counter.value - counted

    logger.info(
        "Starting replica exchange",
        task=task.kind,
        levels=grid.num_levels,
        substeps=grid.substeps_per_level,
        iterations=config.iterations,
        start=ensemble.iteration,
    )

    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else nullcontext()

    with pool as executor:
        for n in range(ensemble.iteration + 1, config.iterations + 1):
            if timeline.index_at(n) != event_index:
                event_index = timeline.index_at(n)
                ladder = ladder_at(n)
                logger.info(
                    "Applied online reward change",
                    iteration=n,
                    reward=ladder.task.reward.label,
                )

            ensemble = communication_sweep(ensemble, n, ladder, config, diagnostics, executor)
            ensemble = local_explore(ensemble, n, ladder, config, diagnostics)
            diagnostics.update_round_trips(ensemble.replica_ids)

            if n > config.burn_in:
                rng = stream(config.seed, 0, n, StreamPurpose.COMPLETE)
                sample, nfe = ladder.complete(ensemble.states[:1], rng)

                diagnostics.completion_nfe += nfe
                state.samples.append(sample[0])
                state.sample_iterations.append(n)
                state.sample_replicas.append(int(ensemble.replica_ids[0]))

            if n % config.log_every == 0:
                logger.debug(
                    "Completed iteration",
                    iteration=n,
                    round_trips=diagnostics.total_round_trips,
                    acceptance=np.round(diagnostics.acceptance_rates, 3).tolist(),
                )

            state.ensemble = ensemble

            if on_checkpoint and config.checkpoint_every and n % config.checkpoint_every == 0:
                sync_evaluations()
                on_checkpoint(state)

    sync_evaluations()

    logger.info(
        "Finished replica exchange",
        round_trips=diagnostics.total_round_trips,
        barrier=round(diagnostics.global_barrier, 4),
        samples=len(state.samples),
        nfe=diagnostics.nfe,
    )

    event_shape = ensemble.states.shape[1:]

    samples = (
        np.stack(state.samples)
        if state.samples
        else np.empty((0, *event_shape), dtype=ensemble.states.dtype)
    )

    return PtResult(
        samples,
        np.asarray(state.sample_iterations, dtype=np.int64),
        np.asarray(state.sample_replicas, dtype=np.int64),
        ensemble,
        diagnostics,
        ladder.task,
    )
