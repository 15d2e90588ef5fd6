import os

import pytest
from hypothesis import HealthCheck, settings

from core.gaussian_core import GaussianSpace, build_grid

settings.register_profile("chaosbound", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("chaosbound")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")


@pytest.fixture
def line():
    return GaussianSpace(1)


@pytest.fixture
def plane():
    return GaussianSpace(2)


@pytest.fixture
def grid1():
    return build_grid(1, 160)


@pytest.fixture
def grid2():
    return build_grid(2, 30)


@pytest.fixture
def write_config(tmp_path):
    """Writes a scenario JSON into tmp_path and returns its path."""
    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
