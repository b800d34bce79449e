import numpy as np
import pytest

from crepe.control.acceptance import (
    PathRnes,
    log_target_ratio,
    path_rnes,
    smc_log_increment,
    swap_log_accept,
    swap_log_ratio,
)
from crepe.control.proposals import pretrained_pair, proposal_pair
from crepe.control.tasks import CfgDebias, Tempering, exact_log_target
from crepe.core.logspace import LogRne, ProcessTag
from crepe.core.paths import Direction, PathSegment
from crepe.diffusion.discrete import KernelOptions, simulate_ctmc_path
from crepe.errors import ConfigError
from crepe.models.discrete import ExactDiscreteModel

STRICT = KernelOptions(strict=True)


def _rnes(pretrained: list[float], proposal: list[float]) -> PathRnes:
    return PathRnes(
        (LogRne(np.array(pretrained), ProcessTag.PRETRAINED),),
        LogRne(np.array(proposal), ProcessTag.PROPOSAL),
    )


def _path(direction: Direction) -> PathSegment:
    return PathSegment(
        np.tile([0.1, 0.2], (2, 1)),
        np.zeros((2, 2, 1)),
        direction,
    )


@pytest.fixture()
def forward_path() -> PathSegment:
    return _path(Direction.FORWARD)


@pytest.fixture()
def backward_path() -> PathSegment:
    return _path(Direction.BACKWARD)


class TestSwap:
    def test_ratio(self, tempering: Tempering, forward_path, backward_path):
        forward = _rnes([1.0, -1.0], [0.5, 0.0])
        backward = _rnes([0.0, 0.2], [0.2, 0.0])

        np.testing.assert_allclose(
            swap_log_ratio(tempering, forward_path, backward_path, forward, backward),
            [-1.7, 2.4],
        )

    def test_accept_is_truncated(self, tempering: Tempering, forward_path, backward_path):
        forward = _rnes([1.0, -1.0], [0.5, 0.0])
        backward = _rnes([0.0, 0.2], [0.2, 0.0])

        np.testing.assert_allclose(
            swap_log_accept(tempering, forward_path, backward_path, forward, backward),
            [-1.7, 0.0],
        )

    def test_non_finite_is_rejected(self, tempering: Tempering, forward_path, backward_path):
        forward = _rnes([-np.inf, 0.0], [0.0, 0.0])
        backward = _rnes([0.0, 0.0], [0.0, np.nan])

        accept = swap_log_accept(tempering, forward_path, backward_path, forward, backward)

        assert np.all(np.isneginf(accept))

    def test_estimate_count(self, discrete_cfg: CfgDebias, forward_path: PathSegment):
        with pytest.raises(ConfigError, match="needs 2 path estimates"):
            log_target_ratio(discrete_cfg, forward_path, _rnes([0.0, 0.0], [0.0, 0.0]))


class TestSmcIncrement:
    def test_value(self, tempering: Tempering, backward_path: PathSegment):
        rnes = _rnes([1.0, -1.0], [0.5, 0.0])

        np.testing.assert_allclose(
            smc_log_increment(tempering, backward_path, rnes),
            [1.5, -2.0],
        )

    def test_non_finite(self, tempering: Tempering, backward_path: PathSegment):
        rnes = _rnes([np.inf, 0.0], [0.0, 0.0])

        increment = smc_log_increment(tempering, backward_path, rnes)

        assert np.isneginf(increment[0])
        assert increment[1] == 0.0


def test_target_ratio_is_exact_for_single_token():
    """With one token the strict Euler kernels are exact and so is the target ratio."""
    task = CfgDebias(
        ExactDiscreteModel.from_factorized(4, [[0.5, 0.3, 0.2]], "unconditional"),
        ExactDiscreteModel.from_factorized(4, [[0.2, 0.3, 0.5]], "conditional"),
        1.2,
        1.2,
    )
    proposal = proposal_pair(task)
    path = simulate_ctmc_path(
        np.array([[0], [1], [2]]),
        np.array([0.3, 0.5, 0.7]),
        proposal.forward,
        uniforms=np.array([[[0.9], [0.5]], [[0.1], [0.9]], [[0.1], [0.1]]]),
        options=STRICT,
    )

    rnes = path_rnes(
        path,
        proposal,
        tuple(pretrained_pair(model) for model in task.models),
        options=STRICT,
    )

    np.testing.assert_allclose(
        log_target_ratio(task, path, rnes),
        exact_log_target(task, path.end, 0.7) - exact_log_target(task, path.start, 0.3),
        atol=1e-12,
    )
