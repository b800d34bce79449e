from pathlib import Path

import orjson
import pytest
from click.testing import CliRunner

from crepe.cli import entry
from crepe.harness.verify import SUITES, SuiteResult


@pytest.fixture()
def runner(mocker) -> CliRunner:
    """A runner that leaves the test logging configuration alone."""
    mocker.patch("crepe.harness.cli.configure_logger")

    return CliRunner()


class TestRun:
    def test_ok(self, runner: CliRunner, config_path: Path, tmp_path: Path):
        result = runner.invoke(entry, ["run", "--config", str(config_path)])

        assert result.exit_code == 0
        assert "Swap acceptance" in result.output
        assert (tmp_path / "run" / "samples.csv").exists()

    def test_options(self, runner: CliRunner, config_path: Path, tmp_path: Path):
        out = tmp_path / "custom"

        result = runner.invoke(
            entry,
            [
                "run",
                "--config",
                str(config_path),
                "--set",
                "engine.iterations=5",
                "--seed",
                "11",
                "--out",
                str(out),
                "--workers",
                "2",
            ],
        )

        assert result.exit_code == 0

        stored = orjson.loads((out / "config.json").read_bytes())

        assert stored["seed"] == 11
        assert stored["config"]["engine"]["iterations"] == 5
        assert stored["config"]["engine"]["workers"] == 2

    def test_invalid_config(self, runner: CliRunner, config_path: Path):
        result = runner.invoke(entry, ["run", "--config", str(config_path), "--set", "seed=-1"])

        assert result.exit_code == 2
        assert "Invalid config" in result.output

    def test_missing_config(self, runner: CliRunner, tmp_path: Path):
        result = runner.invoke(entry, ["run", "--config", str(tmp_path / "missing.json")])

        assert result.exit_code == 2


def test_smc(runner: CliRunner, config_path: Path, tmp_path: Path):
    result = runner.invoke(entry, ["smc", "--config", str(config_path)])

    assert result.exit_code == 0
    assert (tmp_path / "run" / "ancestry.json").exists()


def test_report(runner: CliRunner, config_path: Path, tmp_path: Path):
    runner.invoke(entry, ["run", "--config", str(config_path)])

    result = runner.invoke(entry, ["report", str(tmp_path / "run")])

    assert result.exit_code == 0
    assert (tmp_path / "run" / "histogram.csv").exists()


class TestResume:
    def test_ok(self, runner: CliRunner, config_path: Path, tmp_path: Path):
        runner.invoke(entry, ["run", "--config", str(config_path)])

        result = runner.invoke(
            entry,
            [
                "resume",
                "--checkpoint",
                str(tmp_path / "run" / "checkpoint.json"),
                "--iterations",
                "40",
                "--out",
                str(tmp_path / "longer"),
            ],
        )

        assert result.exit_code == 0
        assert (tmp_path / "longer" / "samples.csv").exists()

    def test_corrupt_checkpoint(self, runner: CliRunner, tmp_path: Path):
        path = tmp_path / "checkpoint.json"
        path.write_text("{")

        result = runner.invoke(
            entry,
            ["resume", "--checkpoint", str(path), "--iterations", "10"],
        )

        assert result.exit_code == 4
        assert "Corrupt checkpoint" in result.output


class TestVerify:
    def test_ok(self, runner: CliRunner):
        result = runner.invoke(entry, ["verify", "--suite", "score-fd"])

        assert result.exit_code == 0
        assert "score-fd" in result.output

    def test_unknown(self, runner: CliRunner):
        result = runner.invoke(entry, ["verify", "--suite", "nope"])

        assert result.exit_code == 2
        assert "Unknown suite 'nope'" in result.output

    def test_no_suites(self, runner: CliRunner):
        result = runner.invoke(entry, ["verify"])

        assert result.exit_code == 2

    def test_failure(self, mocker, runner: CliRunner):
        failed = SuiteResult("score-fd", passed=False)
        mocker.patch.dict(SUITES, {"score-fd": lambda seed: failed})

        result = runner.invoke(entry, ["verify", "--suite", "score-fd"])

        assert result.exit_code == 3
