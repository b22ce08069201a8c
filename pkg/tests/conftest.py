import contextlib

# (number, passed, description) tuples recorded by the acceptance tests
ACCEPTANCE_RESULTS = []


@contextlib.contextmanager
def _record(number, description):
    try:
        yield
    except BaseException:
        ACCEPTANCE_RESULTS.append((number, False, description))
        raise
    ACCEPTANCE_RESULTS.append((number, True, description))


import pytest


@pytest.fixture
def record_criterion():
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, ok, description in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status} - {description}")
