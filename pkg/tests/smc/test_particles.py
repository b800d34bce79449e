import numpy as np
import pytest

from crepe.errors import DegenerateParticlesError
from crepe.smc.particles import ParticleSystem, ess, partial_resample, systematic_resample


def _system(weights) -> ParticleSystem:
    with np.errstate(divide="ignore"):
        log_weights = np.log(np.asarray(weights, dtype=float))

    return ParticleSystem(np.arange(len(weights), dtype=float)[:, None], log_weights)


class TestEss:
    def test_uniform(self):
        value, fraction = ess(np.zeros(8))

        assert value == pytest.approx(8.0)
        assert fraction == pytest.approx(1.0)

    def test_single_survivor(self):
        value, fraction = ess(_system([0.0, 1.0, 0.0, 0.0]).log_weights)

        assert value == pytest.approx(1.0)
        assert fraction == pytest.approx(0.25)

    def test_degenerate(self):
        with pytest.raises(DegenerateParticlesError):
            ess(np.full(3, -np.inf))


class TestSystematic:
    def test_example(self):
        resampled = systematic_resample(_system([0.5, 0.5, 0.0, 0.0]), u=0.5)

        np.testing.assert_array_equal(resampled.ancestry[-1], [0, 0, 1, 1])
        np.testing.assert_array_equal(resampled.particles[:, 0], [0.0, 0.0, 1.0, 1.0])
        np.testing.assert_allclose(resampled.log_weights, np.full(4, -np.log(4)))

    def test_keeps_total_weight(self):
        system = _system([2.0, 1.0, 1.0])

        resampled = systematic_resample(system, u=0.3)

        assert np.exp(resampled.log_weights).sum() == pytest.approx(4.0)


class TestPartial:
    def test_example(self):
        resampled = partial_resample(_system([0.4, 0.3, 0.2, 0.1]), 0.5, u=0.1)

        np.testing.assert_array_equal(resampled.ancestry[-1], [0, 1, 0, 1])
        np.testing.assert_allclose(np.exp(resampled.log_weights), [0.4, 0.3, 0.15, 0.15])

    def test_heavy_particle_is_copied(self):
        resampled = partial_resample(_system([0.7, 0.1, 0.1, 0.1]), 0.75, u=0.5)

        # Slots 1 to 3 are replaced, drawing at 1/6, 1/2 and 5/6 of the full weights.
        np.testing.assert_array_equal(resampled.ancestry[-1], [0, 0, 0, 2])
        np.testing.assert_array_equal(resampled.particles[:, 0], [0.0, 0.0, 0.0, 2.0])
        np.testing.assert_allclose(np.exp(resampled.log_weights), [0.7, 0.1, 0.1, 0.1])

    def test_keeps_total_weight(self):
        system = _system([3.0, 0.5, 0.25, 0.25, 1.0])

        resampled = partial_resample(system, 0.5, u=0.7)

        assert np.exp(resampled.log_weights).sum() == pytest.approx(5.0)
        np.testing.assert_allclose(np.exp(resampled.log_weights[[0, 4]]), [3.0, 1.0])

    def test_empty_subset_is_unchanged(self):
        system = _system([0.5, 0.5, 0.0, 0.0])

        resampled = partial_resample(system, 0.5, u=0.5)

        np.testing.assert_array_equal(resampled.ancestry[-1], np.arange(4))
        np.testing.assert_array_equal(resampled.log_weights, system.log_weights)

    def test_full_fraction_matches_systematic(self):
        system = _system([0.1, 0.6, 0.3])

        partial = partial_resample(system, 1.0, u=0.4)
        full = systematic_resample(system, u=0.4)

        np.testing.assert_array_equal(partial.ancestry[-1], full.ancestry[-1])
        np.testing.assert_allclose(partial.log_weights, full.log_weights)

    @pytest.mark.parametrize("fraction", [0.0, 1.5])
    def test_invalid_fraction(self, fraction: float):
        with pytest.raises(ValueError):
            partial_resample(_system([0.5, 0.5]), fraction, u=0.5)
