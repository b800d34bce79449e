import numpy as np
import pytest

from crepe.core.grid import (
    TimeGrid,
    build_edm_grid,
    build_level_grid,
    build_uniform_grid,
    edm_times,
)
from crepe.errors import InvalidScheduleError


class TestEdmGrid:
    def test_ok(self, edm_grid: TimeGrid):
        assert edm_grid.times.size == 9
        assert edm_grid.t_min == 0.01
        assert edm_grid.t_max == 10.0
        assert np.all(np.diff(edm_grid.times) > 0)

        assert edm_grid.num_levels == 8
        np.testing.assert_array_equal(edm_grid.levels, edm_grid.times)

    def test_endpoints_pinned(self):
        raw = edm_times(0.002, 80.0, 18, 7.0)

        assert raw[0] == 80.0
        assert raw[-1] == 0.002

    def test_times_read_only(self, edm_grid: TimeGrid):
        with pytest.raises(ValueError):
            edm_grid.times[0] = 1.0

    @pytest.mark.parametrize(
        ("t_min", "t_max", "n_steps", "rho"),
        [
            (0.0, 10.0, 8, 7.0),
            (1.0, 0.5, 8, 7.0),
            (0.01, 10.0, 1, 7.0),
            (0.01, 10.0, 8, 0.5),
        ],
    )
    def test_invalid(self, t_min: float, t_max: float, n_steps: int, rho: float):
        with pytest.raises(InvalidScheduleError):
            build_edm_grid(t_min, t_max, n_steps, rho)


class TestUniformGrid:
    def test_levels(self, mask_grid: TimeGrid):
        np.testing.assert_allclose(mask_grid.levels, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert mask_grid.num_levels == 4

    def test_segment_times(self, mask_grid: TimeGrid):
        np.testing.assert_allclose(mask_grid.segment_times(2), [0.25, 0.375, 0.5])

        batch = mask_grid.segment_times(np.array([1, 3]))

        assert batch.shape == (2, 3)
        np.testing.assert_allclose(batch[1], [0.5, 0.625, 0.75])

    @pytest.mark.parametrize("m", [0, 5])
    def test_segment_out_of_range(self, m: int, mask_grid: TimeGrid):
        with pytest.raises(InvalidScheduleError):
            mask_grid.segment_times(m)

    def test_truncation(self):
        grid = build_uniform_grid(0.0, 1.0, 10, 2, 2)

        np.testing.assert_allclose(grid.levels, [0.2, 0.4, 0.6, 0.8, 1.0])
        np.testing.assert_allclose(grid.completion_times(), [0.0, 0.1, 0.2])
        assert grid.truncation_time == pytest.approx(0.2)

    def test_level_step(self, mask_grid: TimeGrid):
        assert mask_grid.level_step(0) == pytest.approx(0.125)
        assert mask_grid.level_step(3) == pytest.approx(0.125)


class TestTimeGrid:
    def test_indivisible(self):
        with pytest.raises(InvalidScheduleError, match="not divisible"):
            TimeGrid(np.linspace(0.0, 1.0, 5), 3)

    def test_not_increasing(self):
        with pytest.raises(InvalidScheduleError, match="strictly increasing"):
            TimeGrid(np.array([0.0, 0.5, 0.5, 1.0]))

    def test_truncation_outside(self):
        with pytest.raises(InvalidScheduleError):
            TimeGrid(np.linspace(0.0, 1.0, 3), 1, 3)

    def test_dict(self, mask_grid: TimeGrid):
        restored = TimeGrid.from_dict(mask_grid.to_dict())

        assert restored == mask_grid
        assert hash(restored) == hash(mask_grid)

    def test_level_grid(self):
        grid = build_level_grid(np.array([0.1, 0.5, 2.0]), 2)

        np.testing.assert_allclose(grid.times, [0.1, 0.3, 0.5, 1.25, 2.0])
        np.testing.assert_allclose(grid.levels, [0.1, 0.5, 2.0])
