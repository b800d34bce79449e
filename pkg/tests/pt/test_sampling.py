from pathlib import Path

import pytest

from crepe.harness.config import load_config
from crepe.harness.experiment import run_experiment

CONFIGS = Path(__file__).parents[2] / "configs"


@pytest.mark.slow()
class TestTargetDistribution:
    def test_tempering(self, tmp_path: Path):
        config = load_config(
            CONFIGS / "tempering.json",
            ("engine.checkpoint_every=0",),
            output=tmp_path,
        )

        result = run_experiment(config)

        assert result.tvd < 0.05
        assert result.mode_occupancy == pytest.approx([0.5, 0.5], abs=0.05)

    def test_discrete_cfg(self, tmp_path: Path):
        config = load_config(
            CONFIGS / "cfg_discrete.json",
            ("engine.iterations=5000",),
            output=tmp_path,
        )

        result = run_experiment(config)

        assert result.samples > 4000
        assert result.tvd < 0.05
