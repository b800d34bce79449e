from pathlib import Path

import pytest

from crepe.harness.config import load_config
from crepe.harness.experiment import RunMode, run_experiment

CONFIGS = Path(__file__).parents[2] / "configs"


@pytest.mark.slow()
@pytest.mark.parametrize("fraction", [0.8, 1.0])
def test_tempering(fraction: float, tmp_path: Path):
    config = load_config(
        CONFIGS / "smc.json",
        (f"smc.partial.fraction={fraction}",),
        output=tmp_path,
    )

    result = run_experiment(config, RunMode.SMC)

    assert result.samples == 4000
    assert result.tvd < 0.07
    assert result.mode_occupancy == pytest.approx([0.5, 0.5], abs=0.07)
