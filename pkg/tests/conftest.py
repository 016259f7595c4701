import json

import numpy as np
import pytest

from spawnglmb.models import load_scenario
from spawnglmb.selfcheck import toy_config


@pytest.fixture
def default_scenario():
    return load_scenario(None)


@pytest.fixture
def toy_scenario():
    return load_scenario(json.dumps(toy_config()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
