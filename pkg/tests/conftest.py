import copy

import numpy as np
import pytest

from searchplan.dynamics import AgentParams
from searchplan.sensing import SensorModel

DEFAULT_PARAMS = AgentParams(mass=3.35, air_resistance=0.2, dt=1.0)
DEFAULT_SENSOR = SensorModel.from_degrees(60.0, 17.0, 93.0)

BASE_SCENARIO = {
    "schema_version": 1,
    "name": "base",
    "workspace": {"min": [-40, -40, 0], "max": [100, 100, 120]},
    "agent": {"start": {"position": [-20, 30, 42]}},
    "sensor": {"fov_deg": 60, "d_min": 17, "d_max": 53},
    "horizon": 10,
    "goal": {"min": [-30, 20, 32], "max": [-10, 40, 52], "window_start": 10},
    "weights": {"time": 0, "energy": 1},
    "detection_requirement": 0.5,
}


def scenario_dict(**overrides) -> dict:
    """Deep copy of a small valid scenario with top-level keys replaced."""
    d = copy.deepcopy(BASE_SCENARIO)
    for k, v in overrides.items():
        if v is None:
            d.pop(k, None)
        else:
            d[k] = v
    return d


@pytest.fixture
def params():
    return DEFAULT_PARAMS


@pytest.fixture
def sensor():
    return DEFAULT_SENSOR


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


SHED = {"name": "shed", "min": [20, 20, 0], "max": [40, 40, 20], "faces": ["+z"]}
SHED_ZONES = {"breakpoints": [17, 27, 53], "pd": [0.9, 0.4], "cell_side": [20, None]}


def shed_dict(**overrides) -> dict:
    """Scenario with a 20 m shed whose roof is one 20 m cell at pd 0.9 (and one at 0.4)."""
    d = scenario_dict(objects_of_interest=[copy.deepcopy(SHED)], zones=copy.deepcopy(SHED_ZONES))
    d.update(copy.deepcopy(overrides))
    return d
