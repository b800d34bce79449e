import numpy as np

from crepe.pt.diagnostics import Diagnostics


class TestSwaps:
    def test_rates(self):
        diagnostics = Diagnostics(4)

        diagnostics.record_swaps(np.array([1, 3]), np.array([True, False]))

        np.testing.assert_array_equal(diagnostics.proposed, [1, 0, 1, 0])
        np.testing.assert_allclose(diagnostics.acceptance_rates, [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(diagnostics.rejection_rates, [0.0, 0.0, 1.0, 0.0])
        assert diagnostics.global_barrier == 1.0


class TestRoundTrips:
    def test_one_trip(self):
        diagnostics = Diagnostics(1)

        for ids in ([0, 1], [1, 0], [0, 1]):
            diagnostics.update_round_trips(np.array(ids))

        np.testing.assert_array_equal(diagnostics.round_trips, [1, 0])
        assert diagnostics.total_round_trips == 1

    def test_top_without_bottom_is_not_a_trip(self):
        """A replica that starts at the top has not left level 0 yet."""
        diagnostics = Diagnostics(1)

        for ids in ([1, 0], [0, 1], [1, 0]):
            diagnostics.update_round_trips(np.array(ids))

        assert diagnostics.round_trips[0] == 0
        assert diagnostics.round_trips[1] == 1

    def test_single_level(self):
        diagnostics = Diagnostics(0)

        diagnostics.update_round_trips(np.array([0]))

        assert diagnostics.total_round_trips == 0


def test_dict_round_trip():
    diagnostics = Diagnostics(2, nfe=12, reward_evaluations=4)
    diagnostics.record_swaps(np.array([2]), np.array([True]))

    restored = Diagnostics.from_dict(diagnostics.to_dict())

    np.testing.assert_array_equal(restored.accepted, diagnostics.accepted)
    assert restored.nfe == 12
    assert restored.reward_evaluations == 4
    assert restored.to_dict() == diagnostics.to_dict()
