import numpy as np
import pytest

from crepe.harness.metrics import (
    exact_bin_masses,
    histogram,
    mode_occupancy,
    quantile_samples,
    quartile_rates,
    stitch_success_rate,
    tvd_discrete,
    tvd_histogram,
    w2_1d,
)


def standard_normal(x: np.ndarray) -> np.ndarray:
    return -0.5 * x[:, 0] ** 2


class TestTvd:
    def test_identical(self):
        exact = np.array([0.5, 0.5, 0.0, 0.0])

        assert tvd_discrete(np.array([[0], [1]]), exact, 4) == pytest.approx(0.0)

    def test_disjoint(self):
        exact = np.array([0.5, 0.5, 0.0, 0.0])

        assert tvd_discrete(np.array([[2], [2]]), exact, 4) == pytest.approx(1.0)

    def test_weighted(self):
        exact = np.array([0.25, 0.75, 0.0, 0.0])
        samples = np.array([[0], [1]])

        assert tvd_discrete(samples, exact, 4, np.array([1.0, 3.0])) == pytest.approx(0.0)

    def test_all_outside_range(self):
        tvd = tvd_histogram(np.array([[10.0], [11.0]]), standard_normal, -4.0, 4.0, 8)

        assert tvd == pytest.approx(1.0)

    def test_close_to_exact(self):
        samples = quantile_samples(standard_normal, -6.0, 6.0, 20_000)[:, None]

        assert tvd_histogram(samples, standard_normal, -4.0, 4.0, 16) < 0.01


class TestHistogram:
    def test_exact_masses(self):
        masses = exact_bin_masses(standard_normal, np.linspace(-4.0, 4.0, 9))

        assert masses.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(masses, masses[::-1])

    def test_empirical(self):
        hist = histogram(np.array([[-0.5], [0.5], [0.7], [9.0]]), standard_normal, -1.0, 1.0, 2)

        np.testing.assert_allclose(hist.empirical, [0.25, 0.5])
        assert hist.tvd == pytest.approx(0.25)


class TestW2:
    def test_point_masses(self):
        assert w2_1d(np.zeros(4), np.full(4, 3.0)) == pytest.approx(3.0)

    def test_unequal_sizes(self):
        assert w2_1d(np.zeros(4), np.ones(2)) == pytest.approx(1.0)

    def test_identical(self):
        a = np.array([0.3, -1.0, 2.0])

        assert w2_1d(a, a[::-1]) == 0.0


def test_quantile_samples_of_uniform():
    samples = quantile_samples(lambda x: np.zeros(len(x)), 0.0, 1.0, 4)

    np.testing.assert_allclose(samples, [0.125, 0.375, 0.625, 0.875])


class TestModeOccupancy:
    def test_nearest(self):
        samples = np.array([[-2.1], [1.9], [2.2], [0.1]])

        np.testing.assert_allclose(mode_occupancy(samples, [-2.0, 2.0]), [0.25, 0.75])

    def test_weighted(self):
        samples = np.array([[-2.1], [1.9]])

        np.testing.assert_allclose(
            mode_occupancy(samples, [-2.0, 2.0], np.array([3.0, 1.0])),
            [0.75, 0.25],
        )

    def test_empty(self):
        np.testing.assert_array_equal(mode_occupancy(np.empty((0, 1)), [-2.0, 2.0]), [0, 0])


def test_stitch_success_without_samples():
    assert stitch_success_rate(np.empty((0, 48)), 3, (-3.0, -3.0), (3.0, 0.0)) == 0.0


@pytest.mark.parametrize(
    ("values", "expected"),
    [
        ([1, 1, 0, 0, 0, 0, 0, 1], (1.0, 0.5)),
        ([1, 0, 1], (0.0, 0.0)),
    ],
)
def test_quartile_rates(values: list[int], expected: tuple[float, float]):
    assert quartile_rates(np.array(values)) == pytest.approx(expected)
