from pathlib import Path

import pytest

from src.scenario import Scenario, build_scenario
from src.settings import parse_settings


ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "assets"

# src0 -- 250 -- r1 -- 250 -- dst2 on a 300-range radio; src0 and dst2 never meet.
# One 500k message every 10 s from src0 to dst2.
CHAIN_SETTINGS = """\
Scenario.name = chain
Scenario.endTime = 100
Scenario.updateInterval = 1.0
Scenario.nrofHostGroups = 3
MovementModel.rngSeed = 1
Group.router = {router}

VHFInterface.type = SimpleBroadcastInterface
VHFInterface.transmitSpeed = {speed}
VHFInterface.transmitRange = 300

Group.bufferSize = 30M
Group.movementModel = StationaryMovement
Group.nrofInterfaces = 1
Group.interface1 = VHFInterface

Group1.groupID = src
Group1.nrofHosts = 1
Group1.nodeLocation = 0, 0

Group2.groupID = r
Group2.nrofHosts = 1
Group2.nodeLocation = 250, 0
Group2.bufferSize = {relay_buffer}

Group3.groupID = dst
Group3.nrofHosts = 1
Group3.nodeLocation = 500, 0

Events1.interval = 10
Events1.size = 500k
Events1.sourceGroups = src
Events1.destinationGroups = dst
"""


def chain_text(router: str = "EpidemicRouter", speed: str = "100M", relay_buffer: str = "30M") -> str:
    return CHAIN_SETTINGS.format(router=router, speed=speed, relay_buffer=relay_buffer)


def make_scenario(text: str, base_dir: str | Path = "") -> Scenario:
    return build_scenario(parse_settings(text), base_dir=str(base_dir))


@pytest.fixture
def assets_dir() -> Path:
    return ASSETS


@pytest.fixture
def scenario_a_path() -> Path:
    return ASSETS / "scenario_a.settings"


@pytest.fixture
def scenario_b_path() -> Path:
    return ASSETS / "scenario_b.settings"


@pytest.fixture
def chain_path(tmp_path) -> Path:
    path = tmp_path / "chain.settings"
    path.write_text(chain_text(), encoding="utf-8")
    return path


@pytest.fixture
def write_settings(tmp_path):
    """Write settings text to a file in tmp_path and return its path."""
    def _write(text: str, name: str = "scenario.settings") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write
