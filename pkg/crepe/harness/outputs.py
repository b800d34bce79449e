"""Run artifacts on disk.

Samples are written as CSV with a comment line holding the config hash and seed.
Everything else is sorted-key JSON written with orjson.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import orjson

from crepe.errors import PersistenceError

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_SORT_KEYS

SAMPLES_FILENAME = "samples.csv"
CONFIG_FILENAME = "config.json"
DIAGNOSTICS_FILENAME = "diagnostics.json"
METRICS_FILENAME = "metrics.json"
ANCESTRY_FILENAME = "ancestry.json"
HISTOGRAM_FILENAME = "histogram.csv"
CHECKPOINT_FILENAME = "checkpoint.json"


@dataclass(frozen=True)
class SampleTable:
    """Samples with one row per draw.

    PT rows are keyed by iteration and the replica at level 0. SMC rows use the batch
    as the iteration and the particle index as the replica.
    """

    iterations: np.ndarray
    replica_ids: np.ndarray
    log_weights: np.ndarray
    states: np.ndarray

    @property
    def is_discrete(self) -> bool:
        return np.issubdtype(self.states.dtype, np.integer)

    @property
    def columns(self) -> list[str]:
        prefix = "tok" if self.is_discrete else "x"

        return [f"{prefix}{i}" for i in range(self.states.shape[1])]


def _header_line(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def write_samples(path: Path, table: SampleTable, config_hash: str, seed: int):
    """Write a sample table.

    Floats are written at ``repr`` precision, so repeated runs give identical files.
    """
    try:
        with open(path, "w", newline="") as f:
            f.write(_header_line(config_hash, seed))

            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["iteration", "replica_id", "log_weight", *table.columns])

            for iteration, replica, log_weight, state in zip(
                table.iterations.tolist(),
                table.replica_ids.tolist(),
                table.log_weights.tolist(),
                table.states.tolist(),
                strict=True,
            ):
                writer.writerow([iteration, replica, log_weight, *state])
    except OSError as e:
        raise PersistenceError(f"Could not write samples to {path}: {e}") from e


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        raise PersistenceError("The samples file has no config hash line")

    return dict(part.split("=", 1) for part in line[1:].split() if "=" in part)


def read_samples(path: Path) -> tuple[SampleTable, str, int]:
    """Read a sample table written by :func:`write_samples`.

    :return: the table, the config hash and the seed
    """
    try:
        with open(path, newline="") as f:
            meta = _parse_header(f.readline())
            rows = list(csv.reader(f))
    except FileNotFoundError as e:
        raise PersistenceError(f"No samples file at {path}") from e
    except OSError as e:
        raise PersistenceError(f"Could not read samples from {path}: {e}") from e

    if not rows or "config_hash" not in meta or "seed" not in meta:
        raise PersistenceError(f"Malformed samples file at {path}")

    header, body = rows[0], rows[1:]
    discrete = len(header) > 3 and header[3].startswith("tok")

    try:
        data = np.asarray(body, dtype=float).reshape(len(body), len(header))
    except ValueError as e:
        raise PersistenceError(f"Malformed samples file at {path}") from e

    states = data[:, 3:].astype(np.int64) if discrete else data[:, 3:]

    table = SampleTable(
        data[:, 0].astype(np.int64),
        data[:, 1].astype(np.int64),
        data[:, 2],
        states,
    )

    return table, meta["config_hash"], int(meta["seed"])


def write_json(path: Path, data: dict):
    try:
        with open(path, "wb") as f:
            f.write(orjson.dumps(data, option=JSON_OPTIONS))
    except (OSError, TypeError) as e:
        raise PersistenceError(f"Could not write {path}: {e}") from e


def read_json(path: Path) -> dict:
    try:
        with open(path, "rb") as f:
            return orjson.loads(f.read())
    except FileNotFoundError as e:
        raise PersistenceError(f"No file at {path}") from e
    except (OSError, orjson.JSONDecodeError) as e:
        raise PersistenceError(f"Could not read {path}: {e}") from e


def write_histogram(
    path: Path,
    edges: np.ndarray,
    empirical: np.ndarray,
    exact: np.ndarray,
    config_hash: str,
    seed: int,
):
    """Write plot-ready histogram rows of bin edges with empirical and exact mass."""
    try:
        with open(path, "w", newline="") as f:
            f.write(_header_line(config_hash, seed))

            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["low", "high", "empirical", "exact"])

            for row in zip(
                edges[:-1].tolist(),
                edges[1:].tolist(),
                empirical.tolist(),
                exact.tolist(),
                strict=True,
            ):
                writer.writerow(row)
    except OSError as e:
        raise PersistenceError(f"Could not write histogram to {path}: {e}") from e
