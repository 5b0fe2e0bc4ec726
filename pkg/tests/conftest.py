import numpy as np
import pytest

from camimpact.corner_map import build_local_map, load_map, solve_fixed_point
from camimpact.scan import rpm_to_rad
from camimpact.scenario import reference_scenario

GOLDEN = "golden_map.json"


@pytest.fixture(scope="session")
def scenario():
    return reference_scenario()


@pytest.fixture(scope="session")
def corner_context(scenario):
    return solve_fixed_point(scenario, rpm_to_rad(673.0))


@pytest.fixture(scope="session")
def derived_map(corner_context):
    return build_local_map(corner_context)


@pytest.fixture(scope="session")
def golden_map():
    from importlib.resources import files
    return load_map(files("camimpact") / "data" / GOLDEN)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
