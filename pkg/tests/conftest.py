import contextlib
import random
import time

import pytest

from lockcoin import crypto

_RESULTS = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def keys512():
    rng = random.Random("test-keys")
    return [crypto.keygen(512, rng) for _ in range(6)]


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Time an acceptance criterion and record one PASS/FAIL line for the summary."""
    results = request.config.stash[_RESULTS]

    @contextlib.contextmanager
    def run(number: int, title: str, budget_s: float):
        start = time.perf_counter()
        notes: list[str] = []
        try:
            yield notes
            elapsed = time.perf_counter() - start
            assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            line = f"FAIL criterion {number:2d}: {title} ({elapsed:.2f}s) {type(exc).__name__}: {exc}"
            results.append((number, line))
            print(line)
            raise
        line = f"PASS criterion {number:2d}: {title} ({elapsed:.2f}s)" + (f" [{'; '.join(notes)}]" if notes else "")
        results.append((number, line))
        print(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results):
        terminalreporter.write_line(line)
