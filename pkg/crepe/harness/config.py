"""Experiment configuration documents.

A config is a single JSON document validated by :class:`ExperimentConfig` before any
computation. Leaf fields can be overridden with dotted paths on the command line.
"""

import hashlib
import os
from enum import StrEnum
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
import orjson
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from crepe.control.rewards import (
    RewardSchedule,
    RewardSpec,
    build_intermediate_reward,
    build_stitch_reward,
    linear_reward,
    quadratic_reward,
)
from crepe.control.tasks import (
    CfgDebias,
    Composition,
    ControlTask,
    EventMode,
    Model,
    OnlineEvent,
    RewardTilt,
    Tempering,
)
from crepe.core.grid import TimeGrid, build_edm_grid, build_uniform_grid
from crepe.diffusion.discrete import KernelOptions
from crepe.diffusion.schedules import NoiseSchedule, build_noise_schedule
from crepe.errors import ConfigError
from crepe.models.discrete import ExactDiscreteModel
from crepe.models.mixture import GaussianMixtureModel
from crepe.models.segments import StitchWeights, build_chain_model
from crepe.pt.config import CtmcProposal, EngineConfig, InitProcess, LocalMove
from crepe.smc.engine import PartialResampling, SmcConfig

OUTPUT_ROOT_ENV = "CREPE_OUTPUT_ROOT"
"""The environment variable holding the default output root."""

DEFAULT_OUTPUT_ROOT = Path("runs")


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleConfig(ConfigModel):
    name: Literal["edm", "constant"] = "edm"
    value: PositiveFloat | None = None
    """The coefficient of a constant schedule."""

    def build(self) -> NoiseSchedule:
        return build_noise_schedule(self.name, self.value)


class GaussianMixtureConfig(ConfigModel):
    kind: Literal["gaussian_mixture"] = "gaussian_mixture"
    weights: list[PositiveFloat]
    means: list[list[float]] | list[float]
    variances: list[PositiveFloat] | PositiveFloat
    schedule: ScheduleConfig = ScheduleConfig()

    def build(self, label: str) -> GaussianMixtureModel:
        return GaussianMixtureModel(
            self.weights,
            self.means,
            self.variances,
            self.schedule.build(),
            label,
        )


class DiscreteModelConfig(ConfigModel):
    kind: Literal["discrete"] = "discrete"

    vocab_size: Annotated[int, Field(ge=2)]
    """``V`` including the mask."""

    num_tokens: PositiveInt

    p0: list
    """A per-token table with ``V - 1`` entries shared by every token, a
    ``(D, V - 1)`` table, or a nested joint table when ``factorized`` is off.
    """

    factorized: bool = True

    def build(self, label: str) -> ExactDiscreteModel:
        if not self.factorized:
            model = ExactDiscreteModel(self.vocab_size, self.p0, label)

            if model.num_tokens != self.num_tokens:
                raise ValueError("The joint table does not have num_tokens axes")

            return model

        tables = np.asarray(self.p0, dtype=float)

        if tables.ndim == 1:
            tables = np.tile(tables, (self.num_tokens, 1))

        if tables.shape[0] != self.num_tokens:
            raise ValueError("p0 needs one table per token")

        return ExactDiscreteModel.from_factorized(self.vocab_size, tables, label)


class StitchSegmentsConfig(ConfigModel):
    kind: Literal["stitch_segments"] = "stitch_segments"
    segments: PositiveInt = 3
    spacing: PositiveFloat = 3.0
    points: Annotated[int, Field(ge=2)] = 8
    std: PositiveFloat = 0.1
    schedule: ScheduleConfig = ScheduleConfig()

    def build(self, label: str):
        return build_chain_model(
            self.schedule.build(),
            self.segments,
            self.spacing,
            self.points,
            self.std,
            label,
        )


ModelConfig = Annotated[
    GaussianMixtureConfig | DiscreteModelConfig | StitchSegmentsConfig,
    Field(discriminator="kind"),
]


class LinearRewardConfig(ConfigModel):
    kind: Literal["linear"] = "linear"
    direction: list[float]
    scale: float = 1.0

    def build(self) -> RewardSpec:
        return linear_reward(self.direction, self.scale)


class QuadraticRewardConfig(ConfigModel):
    kind: Literal["quadratic"] = "quadratic"
    center: list[float]
    scale: PositiveFloat = 1.0

    def build(self) -> RewardSpec:
        return quadratic_reward(self.center, self.scale)


class StitchRewardConfig(ConfigModel):
    kind: Literal["stitch"] = "stitch"
    segments: PositiveInt = 3
    origin: tuple[float, float] = (-3.0, -3.0)
    target: tuple[float, float] = (3.0, 0.0)
    intermediate: tuple[float, float] | None = None
    weights: StitchWeights | None = None

    def build(self) -> RewardSpec:
        return build_stitch_reward(
            self.segments,
            self.origin,
            self.target,
            self.weights,
            self.intermediate,
        )


class IntermediateRewardConfig(ConfigModel):
    """The intermediate-point term on its own, for online events."""

    kind: Literal["intermediate"] = "intermediate"
    segments: PositiveInt = 3
    point: tuple[float, float] = (-3.0, 0.0)
    weights: StitchWeights | None = None

    def build(self) -> RewardSpec:
        return build_intermediate_reward(self.segments, self.point, self.weights)


RewardConfig = Annotated[
    LinearRewardConfig | QuadraticRewardConfig | StitchRewardConfig | IntermediateRewardConfig,
    Field(discriminator="kind"),
]


class TemperingConfig(ConfigModel):
    kind: Literal["tempering"] = "tempering"
    model: str
    beta: PositiveFloat

    @property
    def model_names(self) -> list[str]:
        return [self.model]


class RewardTaskConfig(ConfigModel):
    kind: Literal["reward"] = "reward"
    model: str
    reward: RewardConfig

    rho: PositiveFloat = 5.0
    """The exponent of the reward annealing schedule."""

    proposal_gradient: bool = True
    local_gradient: bool = True

    @property
    def model_names(self) -> list[str]:
        return [self.model]


class CompositionConfig(ConfigModel):
    kind: Literal["composition"] = "composition"
    models: Annotated[list[str], Field(min_length=2)]

    @property
    def model_names(self) -> list[str]:
        return self.models


class CfgConfig(ConfigModel):
    kind: Literal["cfg"] = "cfg"
    unconditional: str
    conditional: str
    w: float

    w_prop: float | None = None
    """The guidance strength of the proposal. Defaults to ``w``."""

    @property
    def model_names(self) -> list[str]:
        return [self.unconditional, self.conditional]


TaskConfig = Annotated[
    TemperingConfig | RewardTaskConfig | CompositionConfig | CfgConfig,
    Field(discriminator="kind"),
]


class EdmGridConfig(ConfigModel):
    kind: Literal["edm"] = "edm"
    t_min: PositiveFloat = 0.01
    t_max: PositiveFloat = 10.0
    n_steps: Annotated[int, Field(ge=2)] = 32
    rho: Annotated[float, Field(ge=1)] = 7.0
    substeps_per_level: PositiveInt = 1
    truncation_index: NonNegativeInt = 0

    def build(self) -> TimeGrid:
        return build_edm_grid(
            self.t_min,
            self.t_max,
            self.n_steps,
            self.rho,
            self.substeps_per_level,
            self.truncation_index,
        )


class UniformGridConfig(ConfigModel):
    kind: Literal["uniform"] = "uniform"
    t_min: Annotated[float, Field(ge=0)] = 0.0
    t_max: PositiveFloat = 1.0
    levels: PositiveInt = 8
    """The number of segments ``M`` above the truncation time."""

    substeps_per_level: PositiveInt = 1
    truncation_index: NonNegativeInt = 0

    def build(self) -> TimeGrid:
        return build_uniform_grid(
            self.t_min,
            self.t_max,
            self.levels * self.substeps_per_level + self.truncation_index,
            self.substeps_per_level,
            self.truncation_index,
        )


GridConfig = Annotated[EdmGridConfig | UniformGridConfig, Field(discriminator="kind")]


class OnlineEventConfig(ConfigModel):
    iteration: PositiveInt
    reward: RewardConfig
    mode: EventMode = EventMode.ADD


class KernelConfig(ConfigModel):
    floor: Annotated[float, Field(ge=0)] = 1e-8
    renormalize: bool = True
    strict: bool = False

    def build(self) -> KernelOptions:
        return KernelOptions(self.floor, self.renormalize, self.strict)


class EngineSettings(ConfigModel):
    iterations: NonNegativeInt
    burn_in: NonNegativeInt | None = None
    local_move: LocalMove = LocalMove.OFF
    ctmc_proposal: CtmcProposal = CtmcProposal.UNIFORM
    resample_top_level: bool = False

    use_reference: bool | None = None
    """Defaults to on for tempering tasks and off otherwise."""

    kernel: KernelConfig = KernelConfig()
    init_process: InitProcess = InitProcess.PROPOSAL
    online_events: list[OnlineEventConfig] = []
    checkpoint_every: NonNegativeInt = 0
    log_every: PositiveInt = 100

    workers: PositiveInt = 1
    """Threads used for swap proposals. Excluded from the config hash."""


class PartialConfig(ConfigModel):
    fraction: Annotated[float, Field(gt=0, le=1)] = 0.8
    ess_threshold: Annotated[float, Field(gt=0, le=1)] = 0.2


class SmcSettings(ConfigModel):
    particles: PositiveInt
    batches: PositiveInt = 1
    ess_threshold: Annotated[float, Field(gt=0, le=1)] = 1.0
    partial: PartialConfig | None = None
    use_reference: bool | None = None
    kernel: KernelConfig = KernelConfig()


class MetricName(StrEnum):
    TVD = "tvd"
    W2 = "w2"
    MODE_OCCUPANCY = "mode_occupancy"
    STITCH_SUCCESS = "stitch_success"


class HistogramConfig(ConfigModel):
    low: float = -4.0
    high: float = 4.0
    bins: PositiveInt = 64

    @model_validator(mode="after")
    def check_range(self) -> "HistogramConfig":
        if self.high <= self.low:
            raise ValueError("The histogram range must be increasing")

        return self


class ExperimentConfig(ConfigModel):
    name: str = "experiment"
    models: dict[str, ModelConfig]
    task: TaskConfig
    grid: GridConfig
    engine: EngineSettings | None = None
    smc: SmcSettings | None = None
    metrics: list[MetricName] = []
    histogram: HistogramConfig = HistogramConfig()

    modes: list[float] = []
    """Mode centres for the occupancy metric."""

    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    output: str | None = None

    @model_validator(mode="after")
    def check_references(self) -> "ExperimentConfig":
        missing = [name for name in self.task.model_names if name not in self.models]

        if missing:
            raise ValueError(f"The task refers to undefined models: {', '.join(missing)}")

        if self.engine is None and self.smc is None:
            raise ValueError("At least one of engine and smc must be configured")

        return self

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """SHA-256 of the sorted-key config without its output location and workers."""
        data = self.to_dict()
        data.pop("output", None)

        if data.get("engine"):
            data["engine"].pop("workers", None)

        return hashlib.sha256(orjson.dumps(data, option=orjson.OPT_SORT_KEYS)).hexdigest()

    def output_dir(self) -> Path:
        if self.output:
            return Path(self.output)

        root = Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))

        return root / f"{self.name}-{self.config_hash()[:12]}"


def _describe_validation_error(e: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
        for error in e.errors()
    )


def _parse_value(raw: str):
    try:
        return orjson.loads(raw)
    except orjson.JSONDecodeError:
        return raw


def apply_override(data: dict, assignment: str) -> dict:
    """Set the leaf at a dotted path, e.g. ``engine.iterations=500``.

    Values are parsed as JSON when possible and kept as strings otherwise. Integer
    path parts index into lists.
    """
    path, sep, raw = assignment.partition("=")

    if not sep or not path:
        raise ConfigError(f"Overrides must have the form a.b=value, got '{assignment}'")

    *parents, leaf = path.split(".")
    node = data

    for part in parents:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})

        if not isinstance(node, dict | list):
            raise ConfigError(f"Cannot override below the leaf '{part}' in '{path}'")

    if isinstance(node, list):
        node[int(leaf)] = _parse_value(raw)
    else:
        node[leaf] = _parse_value(raw)

    return data


def validate_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config: {_describe_validation_error(e)}") from e


def load_config(
    path: Path,
    overrides: tuple[str, ...] = (),
    seed: int | None = None,
    output: Path | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
    """Read, override and validate a config file."""
    try:
        with open(path, "rb") as f:
            data = orjson.loads(f.read())
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"Config file is not valid JSON: {path}") from e

    for assignment in overrides:
        apply_override(data, assignment)

    if seed is not None:
        data["seed"] = seed

    if output is not None:
        data["output"] = str(output)

    if workers is not None and isinstance(data.get("engine"), dict):
        data["engine"]["workers"] = workers

    return validate_config(data)


def build_grid(config: ExperimentConfig) -> TimeGrid:
    return config.grid.build()


def build_models(config: ExperimentConfig) -> dict[str, Model]:
    models = {}

    for name, model_config in config.models.items():
        try:
            models[name] = model_config.build(name)
        except ValueError as e:
            raise ConfigError(f"Invalid model '{name}': {e}") from e

    return models


def build_task(config: ExperimentConfig, models: dict[str, Model], grid: TimeGrid) -> ControlTask:
    task = config.task

    match task:
        case TemperingConfig():
            return Tempering(models[task.model], task.beta)
        case RewardTaskConfig():
            return RewardTilt(
                models[task.model],
                task.reward.build(),
                RewardSchedule(grid.levels, task.rho),
                task.proposal_gradient,
                task.local_gradient,
            )
        case CompositionConfig():
            return Composition(tuple(models[name] for name in task.models))
        case CfgConfig():
            return CfgDebias(
                models[task.unconditional],
                models[task.conditional],
                task.w,
                task.w if task.w_prop is None else task.w_prop,
            )

    raise ConfigError(f"Unknown task kind '{task.kind}'")


def _use_reference(config: ExperimentConfig, setting: bool | None) -> bool:
    if setting is not None:
        return setting

    return isinstance(config.task, TemperingConfig) and not isinstance(
        config.models[config.task.model],
        DiscreteModelConfig,
    )


def build_engine_config(config: ExperimentConfig, grid: TimeGrid) -> EngineConfig:
    settings = config.engine

    if settings is None:
        raise ConfigError("The config has no engine section")

    return EngineConfig(
        grid=grid,
        iterations=settings.iterations,
        burn_in=settings.burn_in,
        local_move=settings.local_move,
        ctmc_proposal=settings.ctmc_proposal,
        resample_top_level=settings.resample_top_level,
        use_reference=_use_reference(config, settings.use_reference),
        kernel=settings.kernel.build(),
        online_events=tuple(
            OnlineEvent(e.iteration, e.reward.build(), e.mode) for e in settings.online_events
        ),
        init_process=settings.init_process,
        seed=config.seed,
        workers=settings.workers,
        checkpoint_every=settings.checkpoint_every,
        log_every=settings.log_every,
    )


def build_smc_config(config: ExperimentConfig, grid: TimeGrid) -> SmcConfig:
    settings = config.smc

    if settings is None:
        raise ConfigError("The config has no smc section")

    partial = (
        None
        if settings.partial is None
        else PartialResampling(settings.partial.fraction, settings.partial.ess_threshold)
    )

    return SmcConfig(
        grid=grid,
        particles=settings.particles,
        batches=settings.batches,
        ess_threshold=settings.ess_threshold,
        partial=partial,
        use_reference=_use_reference(config, settings.use_reference),
        kernel=settings.kernel.build(),
        seed=config.seed,
    )
