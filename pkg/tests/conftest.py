import functools

import pytest
from hypothesis import settings

from mobman.assets.library import reference_robot

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@functools.lru_cache(maxsize=None)
def _robot():
    return reference_robot()


@pytest.fixture(scope="session")
def robot():
    """The reference base + 6-DoF arm + parallel gripper."""
    return _robot()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
