import json
from pathlib import Path

import pytest

from vanetsim import scenario_from_dict

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session")
def twoclass_path() -> Path:
    return FIXTURE_DIR / "twoclass.json"


@pytest.fixture(scope="session")
def uniform2040_path() -> Path:
    return FIXTURE_DIR / "uniform2040.json"


@pytest.fixture(scope="session")
def twoclass(twoclass_path):
    return scenario_from_dict(json.loads(twoclass_path.read_text()))


@pytest.fixture(scope="session")
def uniform2040(uniform2040_path):
    return scenario_from_dict(json.loads(uniform2040_path.read_text()))
