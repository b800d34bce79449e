import numpy as np
import pytest

from crepe.core.rng import RngStream, StreamPurpose, stream


def test_reproducible():
    a = stream(42, 3, 17, StreamPurpose.FORWARD).standard_normal(5)
    b = stream(42, 3, 17, StreamPurpose.FORWARD).standard_normal(5)

    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    ("level", "iteration", "purpose"),
    [
        (4, 17, StreamPurpose.FORWARD),
        (3, 18, StreamPurpose.FORWARD),
        (3, 17, StreamPurpose.BACKWARD),
    ],
)
def test_independent_keys(level: int, iteration: int, purpose: StreamPurpose):
    reference = stream(42, 3, 17, StreamPurpose.FORWARD).standard_normal(5)
    other = stream(42, level, iteration, purpose).standard_normal(5)

    assert not np.array_equal(reference, other)


def test_seed_matters():
    a = stream(1, 0, 0, StreamPurpose.INIT).random(3)
    b = stream(2, 0, 0, StreamPurpose.INIT).random(3)

    assert not np.array_equal(a, b)


def test_stream_id():
    assert RngStream(0, 2, 5, StreamPurpose.ACCEPT).stream_id == (2, 5, 3)


@pytest.mark.parametrize(
    ("seed", "level", "iteration"),
    [(-1, 0, 0), (2**64, 0, 0), (0, -1, 0), (0, 0, -1)],
)
def test_invalid(seed: int, level: int, iteration: int):
    with pytest.raises(ValueError):
        RngStream(seed, level, iteration, StreamPurpose.INIT)
