import pytest

from caasim.channel import LinkParams
from caasim.constellation import OrbitalShell
from caasim.control import LatLonRect
from caasim.scenario import ControlConfig, Scenario, StandaloneConfig


@pytest.fixture(scope="session")
def shell_550():
    return OrbitalShell(1584, 72, 53.0, 550.0, shell_id="leo550")


@pytest.fixture(scope="session")
def shell_1200():
    return OrbitalShell(648, 18, 86.4, 1200.0, shell_id="leo1200")


@pytest.fixture(scope="session")
def link_params():
    return LinkParams()


def make_tiny_scenario(**overrides) -> Scenario:
    """Single small equatorial shell over a small area; fast to simulate."""
    defaults = dict(
        shells=(OrbitalShell(40, 8, 53.0, 550.0, shell_id="mini"),),
        area=LatLonRect(-3.0, 3.0, -8.0, 8.0),
        ue_count=4,
        seed=7,
        duration_s=60.0,
        time_step_s=1.0,
        control=ControlConfig(slice_s=10.0),
    )
    defaults.update(overrides)
    return Scenario(**defaults)


def make_single_sat_scenario(**overrides) -> Scenario:
    """One equatorial satellite overhead of a tiny area at t=0."""
    defaults = dict(
        shells=(OrbitalShell(1, 1, 0.0, 550.0, phasing_factor=0, shell_id="solo"),),
        area=LatLonRect(-0.5, 0.5, -0.5, 0.5),
        ue_count=1,
        seed=3,
        duration_s=120.0,
        standalone=StandaloneConfig(),
    )
    defaults.update(overrides)
    return Scenario(**defaults)
