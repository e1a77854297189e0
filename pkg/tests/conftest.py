import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, title)`` -> ``(passed, summary)`` and print it."""

    def record(number, title, passed, summary):
        line = f"[criterion {number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {summary}"
        _RESULTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[number])
