import numpy as np
import pytest
from scipy import stats

from crepe.diffusion.reference import AffineDrift, ReferenceProcess, propagate_reference
from crepe.diffusion.schedules import (
    MASK_CLIP,
    ConstantSchedule,
    EdmSchedule,
    build_noise_schedule,
    masking_rate,
)
from crepe.errors import InvalidScheduleError, UnsupportedReferenceError


@pytest.fixture()
def edm_reference() -> ReferenceProcess:
    return ReferenceProcess(np.array([1.0]), 0.25, AffineDrift(), EdmSchedule())


class TestReferenceProcess:
    def test_variance_exploding(self, edm_reference: ReferenceProcess):
        mean, var = edm_reference.marginal(np.array([0.5, 2.0]))

        np.testing.assert_allclose(mean, [[1.0], [1.0]])
        np.testing.assert_allclose(var, [0.5, 4.25])

    def test_stationary_ou(self):
        """An Ornstein-Uhlenbeck reference started at its stationary law stays there."""
        ref = ReferenceProcess(np.zeros(1), 0.5, AffineDrift(-1.0), ConstantSchedule(1.0))
        mean, var = ref.marginal(np.array([0.3, 2.0]))

        np.testing.assert_allclose(mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(var, 0.5)

    def test_numerical_moments(self):
        """Time-dependent drifts fall back to the moment ODEs."""
        ref = ReferenceProcess(np.zeros(1), 0.5, AffineDrift(lambda t: -1.0), ConstantSchedule(1.0))
        _, var = ref.marginal(1.0)

        assert float(var) == pytest.approx(0.5, rel=1e-5)

    def test_log_density(self, edm_reference: ReferenceProcess):
        x = np.array([[0.0], [1.5], [3.0]])

        np.testing.assert_allclose(
            edm_reference.log_density(x, 0.5),
            stats.norm.logpdf(x[:, 0], 1.0, np.sqrt(0.5)),
        )

    def test_score_vanishes_at_mean(self, edm_reference: ReferenceProcess):
        np.testing.assert_allclose(edm_reference.score(np.array([[1.0]]), 0.7), [[0.0]])

    def test_non_affine(self, edm_reference: ReferenceProcess):
        with pytest.raises(UnsupportedReferenceError):
            propagate_reference(edm_reference, lambda x, t: -x, 0.5)

    def test_invalid_variance(self):
        with pytest.raises(ValueError):
            ReferenceProcess(np.zeros(1), 0.0, AffineDrift(), EdmSchedule())


class TestSchedules:
    def test_edm(self):
        schedule = EdmSchedule()

        assert float(schedule.sigma(0.5)) == pytest.approx(1.0)
        assert float(schedule.variance(3.0)) == pytest.approx(9.0)
        assert schedule.constant is None

    def test_constant(self):
        schedule = build_noise_schedule("constant", 2.0)

        np.testing.assert_allclose(schedule.variance(np.array([0.5])), [2.0])
        assert schedule.constant == 2.0

    @pytest.mark.parametrize(("name", "value"), [("constant", 0.0), ("vp", None)])
    def test_invalid(self, name: str, value: float | None):
        with pytest.raises(InvalidScheduleError):
            build_noise_schedule(name, value)

    def test_masking_rate(self):
        np.testing.assert_allclose(masking_rate(np.array([0.0, 0.5])), [1.0, 2.0])
        assert float(masking_rate(1.0)) == pytest.approx(1.0 / MASK_CLIP)

    def test_masking_rate_outside(self):
        with pytest.raises(InvalidScheduleError):
            masking_rate(np.array([1.5]))
