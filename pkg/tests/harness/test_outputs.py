from pathlib import Path

import numpy as np
import pytest

from crepe.errors import PersistenceError
from crepe.harness.outputs import (
    SampleTable,
    read_json,
    read_samples,
    write_histogram,
    write_json,
    write_samples,
)


@pytest.fixture()
def table() -> SampleTable:
    return SampleTable(
        np.array([1, 2]),
        np.array([4, 0]),
        np.array([0.0, -1.5]),
        np.array([[0.1, -2.25], [1 / 3, 7.0]]),
    )


class TestSamples:
    def test_layout(self, tmp_path: Path, table: SampleTable):
        path = tmp_path / "samples.csv"

        write_samples(path, table, "abc", 3)

        lines = path.read_text().splitlines()

        assert lines[0] == "# config_hash=abc seed=3"
        assert lines[1] == "iteration,replica_id,log_weight,x0,x1"
        assert lines[2] == "1,4,0.0,0.1,-2.25"

    def test_read(self, tmp_path: Path, table: SampleTable):
        path = tmp_path / "samples.csv"
        write_samples(path, table, "abc", 3)

        restored, config_hash, seed = read_samples(path)

        assert (config_hash, seed) == ("abc", 3)
        np.testing.assert_array_equal(restored.states, table.states)
        np.testing.assert_array_equal(restored.replica_ids, [4, 0])

    def test_discrete(self, tmp_path: Path):
        path = tmp_path / "samples.csv"
        table = SampleTable(np.array([1]), np.array([0]), np.array([0.0]), np.array([[2, 3]]))

        write_samples(path, table, "abc", 0)
        restored, _, _ = read_samples(path)

        assert path.read_text().splitlines()[1].endswith("tok0,tok1")
        assert np.issubdtype(restored.states.dtype, np.integer)
        np.testing.assert_array_equal(restored.states, [[2, 3]])

    def test_missing_header(self, tmp_path: Path):
        path = tmp_path / "samples.csv"
        path.write_text("iteration,replica_id,log_weight,x0\n1,0,0.0,1.0\n")

        with pytest.raises(PersistenceError, match="config hash"):
            read_samples(path)

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(PersistenceError, match="No samples file"):
            read_samples(tmp_path / "samples.csv")


class TestJson:
    def test_sorted(self, tmp_path: Path):
        path = tmp_path / "data.json"

        write_json(path, {"b": np.array([1, 2]), "a": 1})

        assert path.read_text().index('"a"') < path.read_text().index('"b"')
        assert read_json(path) == {"a": 1, "b": [1, 2]}

    def test_missing(self, tmp_path: Path):
        with pytest.raises(PersistenceError):
            read_json(tmp_path / "missing.json")


def test_histogram(tmp_path: Path):
    path = tmp_path / "histogram.csv"

    write_histogram(
        path,
        np.array([0.0, 0.5, 1.0]),
        np.array([0.25, 0.75]),
        np.array([0.5, 0.5]),
        "abc",
        1,
    )

    assert path.read_text().splitlines() == [
        "# config_hash=abc seed=1",
        "low,high,empirical,exact",
        "0.0,0.5,0.25,0.5",
        "0.5,1.0,0.75,0.5",
    ]
