import numpy as np
import orjson

from crepe.errors import ConfigError
from crepe.utils.logging import _dumps, echo_error


def test_json_events_with_numpy_values():
    event = {"event": "Swept", "rates": np.array([0.5, 1.0]), "nfe": np.int64(3)}

    assert orjson.loads(_dumps(event)) == {"event": "Swept", "nfe": 3, "rates": [0.5, 1.0]}


def test_echo_error(capsys):
    echo_error(ConfigError("Invalid config"))

    assert "ERROR: Invalid config" in capsys.readouterr().err
