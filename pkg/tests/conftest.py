import contextlib
import time

import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Context manager recording pass/fail and wall time for an acceptance criterion."""

    @contextlib.contextmanager
    def record(number, label, limit):
        t0 = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            elapsed = time.perf_counter() - t0
            within = elapsed < limit
            _RESULTS[number] = (label, ok and within, elapsed, limit)
            line = (f"criterion {number} {'PASS' if ok and within else 'FAIL'} "
                    f"({elapsed:.2f} s, limit {limit:g} s): {label}")
            print(line)
        assert within, f"criterion {number} took {elapsed:.2f} s > {limit} s"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        label, ok, elapsed, limit = _RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if ok else 'FAIL'}  {elapsed:7.2f} s "
            f"(limit {limit:g} s)  {label}")
