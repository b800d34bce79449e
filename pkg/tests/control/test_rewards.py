import numpy as np
import pytest

from crepe.control.rewards import (
    EvaluationCounter,
    RewardSchedule,
    RewardSpec,
    attention_weights,
    build_intermediate_reward,
    build_stitch_reward,
    constant_reward,
    linear_reward,
    quadratic_reward,
    tweedie_reward,
    tweedie_reward_gradient,
)
from crepe.core.rng import StreamPurpose, stream
from crepe.models.mixture import GaussianMixtureModel
from crepe.models.segments import StitchWeights


def _finite_differences(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    grad = np.empty_like(x)

    for i in range(x.shape[1]):
        step = np.zeros_like(x)
        step[:, i] = eps
        grad[:, i] = (f(x + step) - f(x - step)) / (2 * eps)

    return grad


class TestRewardSpec:
    def test_linear(self):
        reward = linear_reward([1.0, -2.0], 0.5)
        x = np.array([[1.0, 1.0], [2.0, 0.0]])

        np.testing.assert_allclose(reward(x), [-0.5, 1.0])
        np.testing.assert_allclose(reward.gradient(x), [[0.5, -1.0], [0.5, -1.0]])
        assert reward.evaluations == 4

    def test_quadratic(self):
        reward = quadratic_reward([1.0], 2.0)

        np.testing.assert_allclose(reward(np.array([[3.0]])), [-8.0])
        np.testing.assert_allclose(reward.gradient(np.array([[3.0]])), [[-8.0]])

    def test_sum_shares_counter(self):
        a = linear_reward([1.0])
        total = a + quadratic_reward([0.0])

        np.testing.assert_allclose(total(np.array([[2.0]])), [-2.0])
        np.testing.assert_allclose(total.gradient(np.array([[2.0]])), [[-3.0]])
        assert total.label == "linear+quadratic"
        assert a.evaluations == 2

    def test_with_counter(self):
        counter = EvaluationCounter(10)
        reward = constant_reward(1.5).with_counter(counter)

        np.testing.assert_allclose(reward(np.zeros((3, 2))), [1.5, 1.5, 1.5])
        assert counter.value == 13

    def test_no_gradient(self):
        reward = RewardSpec(lambda x: x[:, 0], label="bare")

        assert not reward.has_gradient

        with pytest.raises(ValueError, match="bare"):
            reward.gradient(np.zeros((1, 1)))


class TestRewardSchedule:
    @pytest.fixture()
    def schedule(self) -> RewardSchedule:
        return RewardSchedule(np.array([0.1, 0.5, 1.0, 2.0, 5.0]), rho=5.0)

    def test_endpoints(self, schedule: RewardSchedule):
        assert float(schedule.beta_of_level(0)) == pytest.approx(1.0)
        assert float(schedule.beta_of_level(4)) == pytest.approx(0.0)

    def test_monotone(self, schedule: RewardSchedule):
        beta = schedule.beta_of_level(np.arange(5))

        assert np.all(np.diff(beta) < 0)

    def test_times_outside_levels(self, schedule: RewardSchedule):
        np.testing.assert_allclose(schedule.beta_of_time(np.array([0.01, 50.0])), [1.0, 0.0])

    def test_between_levels(self, schedule: RewardSchedule):
        beta = schedule.beta_of_time(0.75)

        assert float(beta) == pytest.approx(float(schedule.beta_of_level(1.5)))

    def test_single_level(self):
        schedule = RewardSchedule(np.array([0.1]))

        np.testing.assert_allclose(schedule.beta_of_time(np.array([0.1, 3.0])), [1.0, 1.0])


class TestTweedie:
    @pytest.fixture()
    def schedule(self) -> RewardSchedule:
        return RewardSchedule(np.array([0.01, 0.5, 2.0]), rho=2.0)

    def test_value(self, mixture_2d: GaussianMixtureModel, schedule: RewardSchedule):
        reward = linear_reward([1.0, 1.0])
        x = np.array([[0.5, 0.5]])

        expected = reward(mixture_2d.denoise(x, 0.01))

        np.testing.assert_allclose(tweedie_reward(x, 0.01, reward, schedule, mixture_2d), expected)

    def test_vanishes_at_top(self, mixture_2d: GaussianMixtureModel, schedule: RewardSchedule):
        reward = linear_reward([1.0, 1.0])

        value = tweedie_reward(np.ones((2, 2)), 2.0, reward, schedule, mixture_2d)

        np.testing.assert_array_equal(value, [0.0, 0.0])
        assert reward.evaluations == 0

    @pytest.mark.parametrize("t", [0.01, 0.3, 1.2])
    def test_gradient(
        self,
        t: float,
        mixture_2d: GaussianMixtureModel,
        schedule: RewardSchedule,
    ):
        reward = quadratic_reward([1.0, -1.0], 0.7)
        x = np.array([[0.3, -0.2], [1.5, 0.4]])

        np.testing.assert_allclose(
            tweedie_reward_gradient(x, t, reward, schedule, mixture_2d),
            _finite_differences(
                lambda y: tweedie_reward(y, t, reward, schedule, mixture_2d),
                x,
            ),
            atol=1e-6,
        )


class TestStitchReward:
    @pytest.fixture()
    def weights(self) -> StitchWeights:
        """Unit weights keep the reward smooth enough for finite differences."""
        return StitchWeights(
            origin=1.0,
            target=1.0,
            neighbor=1.0,
            intermediate=1.0,
            l2=1.0,
            l1=1.0,
            temperature=1.0,
        )

    @pytest.fixture()
    def chains(self) -> np.ndarray:
        rng = stream(0, 0, 0, StreamPurpose.ORACLE)

        return rng.uniform(-3.0, 3.0, (2, 32))

    def test_gradient(self, chains: np.ndarray, weights: StitchWeights):
        reward = build_stitch_reward(2, (-3.0, -3.0), (3.0, 0.0), weights, (0.0, -3.0))

        np.testing.assert_allclose(
            reward.gradient(chains),
            _finite_differences(reward, chains),
            atol=1e-5,
        )

    def test_intermediate_gradient(self, chains: np.ndarray, weights: StitchWeights):
        reward = build_intermediate_reward(2, (-3.0, 0.0), weights)

        np.testing.assert_allclose(
            reward.gradient(chains),
            _finite_differences(reward, chains),
            atol=1e-5,
        )

    def test_attention_normalized(self, chains: np.ndarray):
        alpha = attention_weights(chains, 2, (0.0, 0.0), StitchWeights.defaults(2))

        assert alpha.shape == (2, 16)
        np.testing.assert_allclose(alpha.sum(axis=1), 1.0)

    def test_perfect_chain_scores_zero(self):
        fractions = np.linspace(0.0, 1.0, 8)[:, None]
        chain = np.concatenate(
            [
                np.array([-3.0, -3.0]) + fractions * np.array([3.0, 0.0]),
                np.array([0.0, -3.0]) + fractions * np.array([3.0, 0.0]),
            ],
        ).reshape(1, -1)
        reward = build_stitch_reward(2, (-3.0, -3.0), (3.0, -3.0))

        np.testing.assert_allclose(reward(chain), [0.0], atol=1e-12)
