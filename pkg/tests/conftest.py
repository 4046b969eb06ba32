import numpy as np
import pytest

from sseplab.profiles import ProfileSpec


@pytest.fixture
def tanh_front():
    return ProfileSpec.tanh_front(0.3, 0.7, width=0.5)


@pytest.fixture
def smoothstep():
    return ProfileSpec.smoothstep(0.2, 0.8, width=8.0, order=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(cid: str, ok: bool, detail: str):
        line = f"{cid:<4}{'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s[1:4])):
            terminalreporter.write_line(line)
