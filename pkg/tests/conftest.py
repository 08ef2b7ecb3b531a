import numpy as np
import pytest
from hypothesis import settings

from ttplan.device import get_profile

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# filled in by test_acceptance.py, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def kepler():
    return get_profile("kepler-k20x")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {msg}")
