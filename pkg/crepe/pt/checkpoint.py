"""Checkpoints of replica exchange runs.

A checkpoint holds the ensemble, the diagnostics and the collected samples after a
completed iteration, together with the config that produced them. Random streams are
keyed by iteration, so a resumed run continues exactly where it stopped.
"""

from pathlib import Path
from typing import Literal

import arrow
import numpy as np
import orjson
from pydantic import BaseModel, ConfigDict, ValidationError
from structlog import get_logger

from crepe.core.paths import ReplicaEnsemble
from crepe.errors import CheckpointError, ConfigError
from crepe.pt.diagnostics import Diagnostics
from crepe.pt.engine import EngineState

logger = get_logger("pt.checkpoint")

CHECKPOINT_VERSION = 1

STREAM_NOTE = (
    "Random streams are keyed by (seed, level, iteration, purpose); "
    "resuming at iteration n + 1 needs no generator state."
)


class CheckpointDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: Literal["crepe-checkpoint"] = "crepe-checkpoint"
    version: int = CHECKPOINT_VERSION

    config_hash: str
    """The hash of the run config the checkpoint belongs to."""

    config: dict
    seed: int
    streams: str = STREAM_NOTE

    created_at: str

    iteration: int
    """The last completed iteration."""

    dtype: str
    states: list
    replica_ids: list[int]
    diagnostics: dict
    samples: list
    sample_iterations: list[int]
    sample_replicas: list[int]

    def to_state(self) -> EngineState:
        dtype = np.dtype(self.dtype)
        states = np.asarray(self.states, dtype=dtype)

        return EngineState(
            ReplicaEnsemble(
                states,
                np.asarray(self.replica_ids, dtype=np.int64),
                self.iteration,
            ),
            Diagnostics.from_dict(self.diagnostics),
            [np.asarray(s, dtype=dtype) for s in self.samples],
            list(self.sample_iterations),
            list(self.sample_replicas),
        )


def checkpoint(state: EngineState, path: Path, config_hash: str, config: dict, seed: int):
    """Write ``state`` to ``path``, replacing any previous checkpoint atomically."""
    ensemble = state.ensemble

    document = CheckpointDocument(
        config_hash=config_hash,
        config=config,
        seed=seed,
        created_at=arrow.utcnow().isoformat(),
        iteration=ensemble.iteration,
        dtype=ensemble.states.dtype.str,
        states=ensemble.states.tolist(),
        replica_ids=ensemble.replica_ids.tolist(),
        diagnostics=state.diagnostics.to_dict(),
        samples=[s.tolist() for s in state.samples],
        sample_iterations=state.sample_iterations,
        sample_replicas=state.sample_replicas,
    )

    partial = path.with_suffix(path.suffix + ".partial")

    try:
        path.parent.mkdir(parents=True, exist_ok=True)

        with open(partial, "wb") as f:
            f.write(orjson.dumps(document.model_dump()))

        partial.replace(path)
    except OSError as e:
        raise CheckpointError(f"Could not write checkpoint to {path}: {e}") from e

    logger.debug("Wrote checkpoint", path=str(path), iteration=ensemble.iteration)


def read_checkpoint(path: Path) -> CheckpointDocument:
    try:
        with open(path, "rb") as f:
            document = CheckpointDocument.model_validate(orjson.loads(f.read()))
    except FileNotFoundError as e:
        raise CheckpointError(f"No checkpoint at {path}") from e
    except (OSError, orjson.JSONDecodeError, ValidationError) as e:
        raise CheckpointError(f"Corrupt checkpoint at {path}") from e

    if document.version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Checkpoint version {document.version} is not supported "
            f"(expected {CHECKPOINT_VERSION})",
        )

    return document


def _flatten(data, prefix: str = "") -> dict:
    if not isinstance(data, dict):
        return {prefix: data}

    flat = {}

    for key, value in data.items():
        flat.update(_flatten(value, f"{prefix}.{key}" if prefix else str(key)))

    return flat


def config_diff(stored: dict, current: dict) -> list[str]:
    """The dotted paths whose values differ between two configs."""
    a, b = _flatten(stored), _flatten(current)

    return sorted(key for key in a.keys() | b.keys() if a.get(key) != b.get(key))


def resume(
    path: Path,
    config_hash: str | None = None,
    config: dict | None = None,
) -> tuple[EngineState, CheckpointDocument]:
    """Load the engine state stored at ``path``.

    :param path: the checkpoint file
    :param config_hash: the hash the checkpoint's config must match, if given
    :param config: the current config, used to summarize a mismatch
    """
    document = read_checkpoint(path)

    if config_hash is not None and document.config_hash != config_hash:
        differing = config_diff(document.config, config) if config is not None else []

        raise ConfigError(
            "The checkpoint was written by a different config"
            + (f" (differs at: {', '.join(differing)})" if differing else ""),
        )

    try:
        state = document.to_state()
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"Corrupt checkpoint at {path}") from e

    logger.info("Resuming from checkpoint", path=str(path), iteration=document.iteration)

    return state, document
