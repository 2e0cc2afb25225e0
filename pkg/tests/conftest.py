import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion.

    A test that errors before recording is reported as FAIL.
    """
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    recorded = []

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}"
        print(line)
        lines.append((number, line))
        recorded.append(number)
        return ok

    yield record
    if not recorded:
        lines.append((99, f"[FAIL] {request.node.name}: raised before reporting"))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines, key=lambda item: item[0]):
            terminalreporter.write_line(line)
