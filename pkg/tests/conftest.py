import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from emdp import parse_emdp

ROOT = Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "thorough", max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def load(name: str):
    return parse_emdp((MODELS / f"{name}.emdp").read_text())


@pytest.fixture(scope="session")
def fig1():
    return load("fig1")


@pytest.fixture(scope="session")
def fig2L():
    return load("fig2L")


@pytest.fixture(scope="session")
def fig2R():
    return load("fig2R")


@pytest.fixture(scope="session")
def fig3():
    return load("fig3")


@pytest.fixture(scope="session")
def pump2():
    return load("pump2")


@pytest.fixture(scope="session")
def loop():
    return load("loop")
