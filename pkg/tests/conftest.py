import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def criterion(request):
    """``criterion(number, title, ok, detail)`` records one check of an
    acceptance criterion; a criterion passes when all its checks pass."""
    log = request.config.stash[_ACCEPTANCE]

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        _, prev_ok, prev = log.get(number, (title, True, []))
        log[number] = (title, prev_ok and bool(ok), prev + ([detail] if detail else []))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(log):
        title, ok, details = log[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title}")
        for d in details:
            terminalreporter.write_line(f"          {d}")
