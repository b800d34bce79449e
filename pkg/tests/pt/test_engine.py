from pathlib import Path

import numpy as np
import pytest

from crepe.control.rewards import RewardSchedule, linear_reward, quadratic_reward
from crepe.control.tasks import CfgDebias, OnlineEvent, RewardTilt, Tempering
from crepe.core.grid import TimeGrid, build_edm_grid
from crepe.errors import ConfigError
from crepe.models.mixture import GaussianMixtureModel
from crepe.pt.checkpoint import checkpoint, resume
from crepe.pt.config import EngineConfig, LocalMove
from crepe.pt.engine import EngineState, Ladder, init_ensemble, run, swap_pairs


@pytest.fixture()
def grid() -> TimeGrid:
    """Four levels of two sub-steps each."""
    return build_edm_grid(0.01, 10.0, 8, 7.0, 2)


@pytest.fixture()
def config(grid: TimeGrid) -> EngineConfig:
    return EngineConfig(grid, 10, burn_in=0, seed=3)


class TestSwapPairs:
    @pytest.mark.parametrize(
        ("iteration", "num_levels", "expected"),
        [
            (1, 4, [1, 3]),
            (2, 4, [2, 4]),
            (1, 5, [1, 3, 5]),
            (2, 5, [2, 4]),
            (1, 1, [1]),
            (2, 1, []),
        ],
    )
    def test_alternating(self, iteration: int, num_levels: int, expected: list[int]):
        np.testing.assert_array_equal(swap_pairs(iteration, num_levels), expected)


class TestEngineConfig:
    def test_default_burn_in(self, grid: TimeGrid):
        assert EngineConfig(grid, 100).burn_in == 2

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"iterations": -1},
            {"iterations": 5, "burn_in": 6},
            {"iterations": 5, "workers": 0},
            {"iterations": 5, "online_events": (OnlineEvent(0, linear_reward([1.0])),)},
        ],
    )
    def test_invalid(self, kwargs: dict, grid: TimeGrid):
        with pytest.raises(ConfigError):
            EngineConfig(grid, **kwargs)


def test_init_ensemble(tempering: Tempering, config: EngineConfig):
    ensemble, nfe = init_ensemble(Ladder.build(tempering, config.grid), config)

    assert ensemble.states.shape == (5, 1)
    assert np.all(np.isfinite(ensemble.states))
    np.testing.assert_array_equal(ensemble.replica_ids, np.arange(5))
    assert nfe == 8


class TestRun:
    def test_samples(self, tempering: Tempering, config: EngineConfig):
        result = run(tempering, config)

        assert result.samples.shape == (10, 1)
        np.testing.assert_array_equal(result.sample_iterations, np.arange(1, 11))
        assert np.all(np.isfinite(result.samples))

    def test_burn_in(self, tempering: Tempering, grid: TimeGrid):
        result = run(tempering, EngineConfig(grid, 10, burn_in=4))

        assert result.samples.shape == (6, 1)
        assert result.sample_iterations[0] == 5

    def test_nfe(self, tempering: Tempering, config: EngineConfig):
        """Every sweep spends ``M K`` evaluations when the number of levels is even."""
        diagnostics = run(tempering, config).diagnostics

        assert diagnostics.nfe == 4 * 2 * 10
        assert diagnostics.proposed.sum() == 20

    def test_deterministic(self, tempering: Tempering, config: EngineConfig):
        first = run(tempering, config)
        second = run(tempering, config)

        np.testing.assert_array_equal(first.samples, second.samples)
        np.testing.assert_array_equal(first.diagnostics.accepted, second.diagnostics.accepted)

    def test_workers_do_not_change_results(self, tempering: Tempering, grid: TimeGrid):
        single = run(tempering, EngineConfig(grid, 10, burn_in=0, seed=3))
        threaded = run(tempering, EngineConfig(grid, 10, burn_in=0, seed=3, workers=3))

        np.testing.assert_array_equal(single.samples, threaded.samples)
        np.testing.assert_array_equal(single.ensemble.replica_ids, threaded.ensemble.replica_ids)

    def test_seed_changes_results(self, tempering: Tempering, grid: TimeGrid):
        a = run(tempering, EngineConfig(grid, 10, burn_in=0, seed=1))
        b = run(tempering, EngineConfig(grid, 10, burn_in=0, seed=2))

        assert not np.array_equal(a.samples, b.samples)

    def test_replicas_stay_a_permutation(self, tempering: Tempering, config: EngineConfig):
        ensemble = run(tempering, config).ensemble

        np.testing.assert_array_equal(np.sort(ensemble.replica_ids), np.arange(5))
        assert ensemble.iteration == 10

    def test_no_iterations(self, tempering: Tempering, grid: TimeGrid):
        result = run(tempering, EngineConfig(grid, 0))

        assert result.samples.shape == (0, 1)
        assert result.diagnostics.nfe == 0

    def test_logs(self, log, tempering: Tempering, config: EngineConfig):
        run(tempering, config)

        assert log.has("Starting replica exchange", levels=4, substeps=2)
        assert log.has("Finished replica exchange")

    def test_ula(self, tempering: Tempering, grid: TimeGrid):
        result = run(tempering, EngineConfig(grid, 5, burn_in=0, local_move=LocalMove.ULA))

        assert result.diagnostics.local_nfe == 5 * 5
        assert np.all(np.isfinite(result.samples))

    def test_resample_top_level(self, tempering: Tempering, grid: TimeGrid):
        result = run(tempering, EngineConfig(grid, 5, resample_top_level=True))

        assert np.all(np.isfinite(result.ensemble.states))

    def test_ula_needs_continuous(self, discrete_cfg: CfgDebias, mask_grid: TimeGrid):
        with pytest.raises(ConfigError, match="continuous"):
            run(discrete_cfg, EngineConfig(mask_grid, 5, local_move=LocalMove.ULA))

    def test_ctmc_needs_discrete(self, tempering: Tempering, grid: TimeGrid):
        with pytest.raises(ConfigError, match="discrete"):
            run(tempering, EngineConfig(grid, 5, local_move=LocalMove.CTMC_MH))

    def test_discrete(self, discrete_cfg: CfgDebias, mask_grid: TimeGrid):
        result = run(
            discrete_cfg,
            EngineConfig(mask_grid, 10, burn_in=0, local_move=LocalMove.CTMC_MH),
        )

        assert result.samples.shape == (10, 2)
        assert np.issubdtype(result.samples.dtype, np.integer)
        assert np.all((result.samples >= 0) & (result.samples <= 3))
        assert result.diagnostics.nfe == 4 * 2 * 10

    def test_online_event(self, log, bimodal: GaussianMixtureModel, grid: TimeGrid):
        task = RewardTilt(bimodal, linear_reward([1.0]), RewardSchedule(grid.levels))
        config = EngineConfig(
            grid,
            10,
            online_events=(OnlineEvent(5, quadratic_reward([0.0])),),
        )

        result = run(task, config)

        assert result.task.reward.label == "linear+quadratic"
        assert result.diagnostics.reward_evaluations > 0
        assert log.has("Applied online reward change", iteration=5)


class TestCheckpointing:
    def test_callback(self, tempering: Tempering, grid: TimeGrid):
        seen = []

        run(
            tempering,
            EngineConfig(grid, 10, checkpoint_every=4),
            on_checkpoint=lambda state: seen.append(state.ensemble.iteration),
        )

        assert seen == [4, 8]

    def test_resume_matches_uninterrupted(
        self,
        tmp_path: Path,
        tempering: Tempering,
        grid: TimeGrid,
    ):
        path = tmp_path / "checkpoint.json"
        config = EngineConfig(grid, 20, burn_in=0, seed=5, checkpoint_every=10)

        def write(state: EngineState):
            if state.ensemble.iteration == 10:
                checkpoint(state, path, "hash", {}, 5)

        uninterrupted = run(tempering, config, on_checkpoint=write)
        state, document = resume(path, "hash")
        resumed = run(tempering, config, state)

        assert document.iteration == 10
        np.testing.assert_array_equal(resumed.samples, uninterrupted.samples)
        np.testing.assert_array_equal(
            resumed.diagnostics.accepted,
            uninterrupted.diagnostics.accepted,
        )
        assert resumed.diagnostics.nfe == uninterrupted.diagnostics.nfe
