import sys
from importlib import resources
from pathlib import Path

import pytest

from droidmbt.modelio import build_system_model, load_controls, parse_model

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(str(resources.files("droidmbt") / "fixtures"))


def load_fixture(name: str, bind: bool = True):
    doc = parse_model((FIXTURES / name).read_bytes())
    controls = load_controls(doc, FIXTURES) if bind else None
    return build_system_model(doc, controls)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def facebook():
    return load_fixture("facebook_youtube.xml")


@pytest.fixture(scope="session")
def send_receive():
    return load_fixture("send_receive.xml")


@pytest.fixture(scope="session")
def independent():
    return load_fixture("independent.xml")
