import pytest

from crepe.errors import UnknownSuiteError
from crepe.harness.verify import SUITES, SuiteResult, discrete_cfg_task, run_suites


def test_suite_names():
    assert sorted(SUITES) == [
        "ctmc-detailed-balance",
        "local-detailed-balance",
        "nfe-parity",
        "rne-identity",
        "score-fd",
        "smc-weights",
        "stabilized-rne",
        "unit-acceptance",
    ]


@pytest.mark.parametrize(
    "name",
    ["ctmc-detailed-balance", "local-detailed-balance", "nfe-parity", "score-fd"],
)
def test_suite(name: str):
    (result,) = run_suites([name])

    assert result.name == name
    assert result.passed, result.rows


@pytest.mark.slow()
@pytest.mark.parametrize(
    "name",
    ["rne-identity", "unit-acceptance", "smc-weights", "stabilized-rne"],
)
def test_slow_suite(name: str):
    (result,) = run_suites([name])

    assert result.passed, result.rows


def test_unknown_suite_runs_nothing(mocker):
    suite = mocker.Mock()
    mocker.patch.dict(SUITES, {"score-fd": suite})

    with pytest.raises(UnknownSuiteError, match="Unknown suite 'nope'"):
        run_suites(["score-fd", "nope"])

    suite.assert_not_called()


def test_suite_result():
    result = SuiteResult("example")

    result.check(True, "fine")
    result.note("detail")
    result.check(False, "broken")

    assert not result.passed
    assert len(result.rows) == 3


def test_discrete_cfg_task():
    task = discrete_cfg_task(3, 2.0)

    assert task.target_weights == (-1.0, 2.0)
    assert task.models[0].num_tokens == 3
