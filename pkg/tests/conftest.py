from pathlib import Path

import numpy as np
import orjson
import pytest

from crepe.control.tasks import CfgDebias, Tempering
from crepe.core.grid import TimeGrid, build_edm_grid, build_uniform_grid
from crepe.models.discrete import ExactDiscreteModel
from crepe.models.mixture import GaussianMixtureModel, bimodal_mixture


@pytest.fixture()
def bimodal() -> GaussianMixtureModel:
    """Equal-weight 1-D Gaussians at -2 and 2 with standard deviation 0.2."""
    return bimodal_mixture()


@pytest.fixture()
def mixture_2d() -> GaussianMixtureModel:
    return GaussianMixtureModel(
        [0.3, 0.7],
        [[-1.0, 0.5], [1.5, -0.5]],
        [0.2, 0.4],
        label="mixture",
    )


@pytest.fixture()
def edm_grid() -> TimeGrid:
    """Eight EDM levels from 0.01 to 10."""
    return build_edm_grid(0.01, 10.0, 8, 7.0)


@pytest.fixture()
def mask_grid() -> TimeGrid:
    """Four masking levels of two sub-steps each on [0, 1]."""
    return build_uniform_grid(0.0, 1.0, 8, 2)


@pytest.fixture()
def tempering(bimodal: GaussianMixtureModel) -> Tempering:
    return Tempering(bimodal, 2.0)


@pytest.fixture()
def discrete_model() -> ExactDiscreteModel:
    """Two independent tokens over three values and the mask."""
    return ExactDiscreteModel.from_factorized(
        4,
        [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]],
        "tokens",
    )


@pytest.fixture()
def discrete_cfg() -> CfgDebias:
    unconditional = ExactDiscreteModel.from_factorized(
        4,
        np.tile([0.5, 0.3, 0.2], (2, 1)),
        "unconditional",
    )
    conditional = ExactDiscreteModel.from_factorized(
        4,
        np.tile([0.2, 0.3, 0.5], (2, 1)),
        "conditional",
    )

    return CfgDebias(unconditional, conditional, 1.2, 1.2)


@pytest.fixture()
def config_data(tmp_path: Path) -> dict:
    """A small tempering experiment that runs in about a second."""
    return {
        "name": "small",
        "models": {
            "bimodal": {
                "kind": "gaussian_mixture",
                "weights": [0.5, 0.5],
                "means": [-2.0, 2.0],
                "variances": 0.04,
            },
        },
        "task": {"kind": "tempering", "model": "bimodal", "beta": 2.0},
        "grid": {"kind": "edm", "t_min": 0.01, "t_max": 10.0, "n_steps": 8, "rho": 7.0},
        "engine": {"iterations": 30, "burn_in": 0, "checkpoint_every": 10},
        "smc": {"particles": 32, "batches": 2, "ess_threshold": 0.5},
        "metrics": ["tvd", "w2", "mode_occupancy"],
        "modes": [-2.0, 2.0],
        "seed": 7,
        "output": str(tmp_path / "run"),
    }


@pytest.fixture()
def config_path(config_data: dict, tmp_path: Path) -> Path:
    """The small tempering experiment written to a config file."""
    path = tmp_path / "config.json"
    path.write_bytes(orjson.dumps(config_data))

    return path
