import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records one acceptance line and returns ``ok``."""

    def record(n, ok, detail):
        _VERDICTS.append((n, "PASS" if ok else "FAIL", detail))
        return ok

    return record


@pytest.fixture
def skip_verdict():
    def record(n, reason):
        _VERDICTS.append((n, "SKIP", reason))
        pytest.skip(reason)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
