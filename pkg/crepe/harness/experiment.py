"""Run experiments end to end and write their artifacts.

An experiment builds the models and task described by an :class:`ExperimentConfig`,
runs replica exchange or SMC, scores the samples against the exact target and writes
everything into one output directory.
"""

import time
from enum import StrEnum
from pathlib import Path

import arrow
import numpy as np
from pydantic import BaseModel, Field
from scipy import special
from structlog import get_logger

from crepe.control.tasks import ControlTask, TaskTimeline, exact_log_target
from crepe.core.grid import TimeGrid
from crepe.errors import ConfigError, PersistenceError
from crepe.harness.config import (
    ExperimentConfig,
    IntermediateRewardConfig,
    MetricName,
    RewardTaskConfig,
    StitchRewardConfig,
    build_engine_config,
    build_grid,
    build_models,
    build_smc_config,
    build_task,
    validate_config,
)
from crepe.harness.metrics import (
    Histogram,
    discrete_histogram,
    histogram,
    mode_occupancy,
    pass_through_rate,
    quantile_samples,
    quartile_rates,
    stitch_success_rate,
    w2_1d,
)
from crepe.harness.outputs import (
    ANCESTRY_FILENAME,
    CHECKPOINT_FILENAME,
    CONFIG_FILENAME,
    DIAGNOSTICS_FILENAME,
    HISTOGRAM_FILENAME,
    METRICS_FILENAME,
    SAMPLES_FILENAME,
    SampleTable,
    read_json,
    read_samples,
    write_histogram,
    write_json,
    write_samples,
)
from crepe.models.segments import is_stitched
from crepe.pt import checkpoint as checkpoints
from crepe.pt.engine import EngineState, run
from crepe.smc.engine import smc_run
from crepe.smc.particles import ParticleSystem, systematic_resample

logger = get_logger("harness.experiment")

PASS_THROUGH_WINDOW = 2000
"""Iterations after an online event over which the pass-through rate is measured."""


class RunMode(StrEnum):
    PT = "pt"
    SMC = "smc"


class MetricReport(BaseModel):
    """Sample quality and cost of one run."""

    mode: RunMode
    samples: int
    nfe: int

    tvd: float | None = Field(default=None, ge=0, le=1)
    w2: float | None = Field(default=None, ge=0)
    mode_occupancy: list[float] | None = None

    stitch_success: float | None = None
    stitch_quartiles: tuple[float, float] | None = None
    """Success over the first and last quarter of the samples."""

    pass_through: tuple[float, float] | None = None
    """The pass-through rate before and after the first online event."""

    acceptance_rates: list[float] | None = None
    round_trips: int | None = None
    ess_trace: list[list[float]] | None = None
    reward_evaluations: int | None = None

    wall_time: float | None = None


def _stamp(config_hash: str, seed: int) -> dict:
    return {"config_hash": config_hash, "seed": seed}


def _prepare_output(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PersistenceError(f"Could not create output directory {path}: {e}") from e

    return path


def final_task(config: ExperimentConfig, grid: TimeGrid) -> ControlTask:
    """The task in force after the last iteration, with every online event applied."""
    task = build_task(config, build_models(config), grid)

    if config.engine is None or not config.engine.online_events:
        return task

    engine = build_engine_config(config, grid)

    return TaskTimeline(task, engine.online_events).at(engine.iterations)


def _stitch_reward(config: ExperimentConfig) -> StitchRewardConfig | None:
    task = config.task

    if isinstance(task, RewardTaskConfig) and isinstance(task.reward, StitchRewardConfig):
        return task.reward

    return None


def _intermediate_event(config: ExperimentConfig) -> tuple[int, tuple[float, float]] | None:
    if config.engine is None:
        return None

    for event in config.engine.online_events:
        if isinstance(event.reward, IntermediateRewardConfig):
            return event.iteration, event.reward.point

        if isinstance(event.reward, StitchRewardConfig) and event.reward.intermediate:
            return event.iteration, event.reward.intermediate

    return None


def _weights(table: SampleTable, weighted: bool) -> np.ndarray | None:
    if not weighted or table.log_weights.size == 0:
        return None

    return np.exp(table.log_weights - special.logsumexp(table.log_weights))


def _unweighted(table: SampleTable, weights: np.ndarray | None) -> np.ndarray:
    """Equally weighted states, resampling weighted ones deterministically."""
    if weights is None:
        return table.states

    system = ParticleSystem(table.states, np.log(weights))

    return systematic_resample(system, u=0.5).particles


def exact_probabilities(task: ControlTask, grid: TimeGrid) -> np.ndarray:
    """The discrete target at ``t_min`` over the enumerated states."""
    states = task.models[0].enumerate_states()

    return special.softmax(exact_log_target(task, states, grid.t_min))


def sample_histogram(
    config: ExperimentConfig,
    task: ControlTask,
    grid: TimeGrid,
    table: SampleTable,
    weights: np.ndarray | None,
) -> Histogram | None:
    """Bin the samples against the exact target at ``t_min``.

    Discrete tasks are binned over their enumerated states. Continuous tasks are
    binned along their only coordinate; higher dimensional targets have no histogram.
    """
    if task.is_discrete:
        model = task.models[0]

        return discrete_histogram(
            table.states,
            exact_probabilities(task, grid),
            model.vocab_size,
            weights,
        )

    if task.models[0].dim != 1:
        return None

    settings = config.histogram

    return histogram(
        table.states,
        lambda x: exact_log_target(task, x, grid.t_min),
        settings.low,
        settings.high,
        settings.bins,
        weights,
    )


def compute_metrics(
    config: ExperimentConfig,
    task: ControlTask,
    grid: TimeGrid,
    table: SampleTable,
    weighted: bool,
) -> dict:
    """Evaluate the metrics the config asks for.

    :param weighted: whether the table's log weights are importance weights
    """
    weights = _weights(table, weighted)
    metrics = {}

    for name in config.metrics:
        match name:
            case MetricName.TVD:
                if (hist := sample_histogram(config, task, grid, table, weights)) is not None:
                    metrics["tvd"] = hist.tvd
                else:
                    logger.warning("TVD needs a one-dimensional target", dim=task.models[0].dim)

            case MetricName.W2:
                if task.is_discrete or task.models[0].dim != 1 or table.states.shape[0] == 0:
                    logger.warning("W2 needs one-dimensional continuous samples")
                    continue

                states = _unweighted(table, weights)
                exact = quantile_samples(
                    lambda x: exact_log_target(task, x, grid.t_min),
                    config.histogram.low,
                    config.histogram.high,
                    states.shape[0],
                )
                metrics["w2"] = w2_1d(states[:, 0], exact)

            case MetricName.MODE_OCCUPANCY:
                if not config.modes:
                    raise ConfigError("The mode_occupancy metric needs mode centres")

                metrics["mode_occupancy"] = mode_occupancy(
                    table.states,
                    config.modes,
                    weights,
                ).tolist()

            case MetricName.STITCH_SUCCESS:
                metrics.update(_stitch_metrics(config, table, weights))

    return metrics


def _stitch_metrics(
    config: ExperimentConfig,
    table: SampleTable,
    weights: np.ndarray | None,
) -> dict:
    reward = _stitch_reward(config)

    if reward is None:
        raise ConfigError("The stitch_success metric needs a stitch reward task")

    metrics = {
        "stitch_success": stitch_success_rate(
            table.states,
            reward.segments,
            reward.origin,
            reward.target,
            weights,
        ),
    }

    if weights is None:
        indicator = is_stitched(table.states, reward.segments, reward.origin, reward.target)
        metrics["stitch_quartiles"] = quartile_rates(indicator)

    if (event := _intermediate_event(config)) is not None and weights is None:
        start, point = event
        before = table.iterations < start
        after = (table.iterations >= start) & (table.iterations < start + PASS_THROUGH_WINDOW)

        metrics["pass_through"] = (
            pass_through_rate(table.states[before], reward.segments, point),
            pass_through_rate(table.states[after], reward.segments, point),
        )

    return metrics


def _write_config(path: Path, config: ExperimentConfig, mode: RunMode):
    write_json(
        path / CONFIG_FILENAME,
        {**_stamp(config.config_hash(), config.seed), "mode": mode, "config": config.to_dict()},
    )


def _write_metrics(path: Path, config: ExperimentConfig, report: MetricReport):
    write_json(
        path / METRICS_FILENAME,
        {
            **_stamp(config.config_hash(), config.seed),
            "created_at": arrow.utcnow().isoformat(),
            **report.model_dump(mode="json"),
        },
    )


def _run_pt(
    config: ExperimentConfig,
    output: Path,
    state: EngineState | None = None,
) -> MetricReport:
    config_hash = config.config_hash()
    grid = build_grid(config)
    task = build_task(config, build_models(config), grid)
    engine = build_engine_config(config, grid)
    checkpoint_path = output / CHECKPOINT_FILENAME

    def on_checkpoint(current: EngineState):
        checkpoints.checkpoint(current, checkpoint_path, config_hash, config.to_dict(), config.seed)

    started = time.perf_counter()
    result = run(task, engine, state, on_checkpoint)
    wall_time = time.perf_counter() - started

    on_checkpoint(
        EngineState(
            result.ensemble,
            result.diagnostics,
            list(result.samples),
            result.sample_iterations.tolist(),
            result.sample_replicas.tolist(),
        ),
    )

    table = SampleTable(
        result.sample_iterations,
        result.sample_replicas,
        np.zeros(result.sample_iterations.size),
        result.samples,
    )
    write_samples(output / SAMPLES_FILENAME, table, config_hash, config.seed)
    write_json(
        output / DIAGNOSTICS_FILENAME,
        {**_stamp(config_hash, config.seed), "mode": RunMode.PT, **result.diagnostics.to_dict()},
    )

    diagnostics = result.diagnostics

    report = MetricReport(
        mode=RunMode.PT,
        samples=table.states.shape[0],
        nfe=diagnostics.nfe,
        acceptance_rates=diagnostics.acceptance_rates.tolist(),
        round_trips=diagnostics.total_round_trips,
        reward_evaluations=diagnostics.reward_evaluations,
        wall_time=wall_time,
        **compute_metrics(config, result.task, grid, table, weighted=False),
    )

    _write_metrics(output, config, report)

    return report


def _run_smc(config: ExperimentConfig, output: Path) -> MetricReport:
    config_hash = config.config_hash()
    grid = build_grid(config)
    task = build_task(config, build_models(config), grid)
    smc = build_smc_config(config, grid)

    started = time.perf_counter()
    result = smc_run(task, smc)
    wall_time = time.perf_counter() - started

    table = SampleTable(
        result.batch_index,
        np.tile(np.arange(smc.particles), smc.batches),
        result.log_weights,
        result.samples,
    )
    write_samples(output / SAMPLES_FILENAME, table, config_hash, config.seed)
    write_json(
        output / DIAGNOSTICS_FILENAME,
        {**_stamp(config_hash, config.seed), "mode": RunMode.SMC, **result.diagnostics.to_dict()},
    )
    write_json(
        output / ANCESTRY_FILENAME,
        {**_stamp(config_hash, config.seed), "batches": result.ancestry},
    )

    report = MetricReport(
        mode=RunMode.SMC,
        samples=table.states.shape[0],
        nfe=result.diagnostics.nfe,
        ess_trace=result.diagnostics.ess_history,
        reward_evaluations=task.reward.counter.value if task.has_reward else None,
        wall_time=wall_time,
        **compute_metrics(config, task, grid, table, weighted=True),
    )

    _write_metrics(output, config, report)

    return report


def run_experiment(config: ExperimentConfig, mode: RunMode = RunMode.PT) -> MetricReport:
    """Run ``config`` and write its samples, diagnostics, metrics and resolved config.

    Repeated runs of the same config and seed write identical sample files.
    """
    output = _prepare_output(config.output_dir())
    log = logger.bind(seed=config.seed, config_hash=config.config_hash()[:12])

    log.info("Starting experiment", name=config.name, mode=mode, output=str(output))

    _write_config(output, config, mode)

    report = _run_pt(config, output) if mode == RunMode.PT else _run_smc(config, output)

    log.info(
        "Finished experiment",
        samples=report.samples,
        nfe=report.nfe,
        wall_time=round(report.wall_time, 3),
    )

    return report


def resume_experiment(
    path: Path,
    iterations: int,
    config: ExperimentConfig | None = None,
    output: Path | None = None,
    workers: int | None = None,
) -> MetricReport:
    """Continue the replica exchange run checkpointed at ``path`` up to ``iterations``.

    The burn-in of the original run is kept. Artifacts are written next to the
    checkpoint unless ``output`` is given.

    :param config: the config the checkpoint must have been written by, if given
    """
    document = checkpoints.read_checkpoint(path)
    stored = validate_config(document.config)

    if stored.engine is None:
        raise ConfigError("The checkpointed config has no engine section")

    if config is not None:
        expected = config.to_dict()

        if expected.get("engine"):
            expected["engine"]["iterations"] = stored.engine.iterations

        expected_hash = validate_config(expected).config_hash()
    else:
        expected, expected_hash = None, stored.config_hash()

    state, _ = checkpoints.resume(path, expected_hash, expected)

    if iterations < document.iteration:
        raise ConfigError(
            f"Cannot resume to iteration {iterations}; "
            f"the checkpoint is at iteration {document.iteration}",
        )

    data = (config or stored).to_dict()
    data["engine"]["iterations"] = iterations
    data["engine"]["burn_in"] = build_engine_config(stored, build_grid(stored)).burn_in
    data["output"] = str(output or path.parent)

    if workers is not None:
        data["engine"]["workers"] = workers

    resumed = validate_config(data)
    target = _prepare_output(resumed.output_dir())

    log = logger.bind(seed=resumed.seed, config_hash=resumed.config_hash()[:12])
    log.info("Resuming experiment", start=document.iteration, iterations=iterations)

    _write_config(target, resumed, RunMode.PT)

    return _run_pt(resumed, target, state)


def report(path: Path) -> tuple[MetricReport, dict]:
    """Recompute the metrics of a finished run and write its histogram table.

    :return: the recomputed report and the run's stored diagnostics
    """
    stored = read_json(path / CONFIG_FILENAME)
    diagnostics = read_json(path / DIAGNOSTICS_FILENAME)
    config = validate_config(stored["config"])
    mode = RunMode(stored["mode"])

    table, config_hash, seed = read_samples(path / SAMPLES_FILENAME)

    if config_hash != stored["config_hash"]:
        raise PersistenceError(f"The samples in {path} belong to a different config")

    grid = build_grid(config)
    task = (
        final_task(config, grid)
        if mode == RunMode.PT
        else build_task(config, build_models(config), grid)
    )
    weighted = mode == RunMode.SMC

    hist = sample_histogram(config, task, grid, table, _weights(table, weighted))

    if hist is not None:
        write_histogram(
            path / HISTOGRAM_FILENAME,
            hist.edges,
            hist.empirical,
            hist.exact,
            config_hash,
            seed,
        )

    recomputed = MetricReport(
        mode=mode,
        samples=table.states.shape[0],
        nfe=diagnostics["nfe"],
        acceptance_rates=diagnostics.get("acceptance_rates"),
        round_trips=diagnostics.get("total_round_trips"),
        ess_trace=diagnostics.get("ess_history"),
        reward_evaluations=diagnostics.get("reward_evaluations"),
        **compute_metrics(config, task, grid, table, weighted),
    )

    logger.info("Recomputed metrics", path=str(path), samples=recomputed.samples)

    return recomputed, diagnostics

