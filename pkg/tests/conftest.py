"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end."""

import contextlib

import pytest

_VERDICTS = []


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def check(number, title):
        try:
            yield
        except BaseException as exc:
            reason = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            line = f"FAIL  criterion {number:>2}: {title} ({reason[:160]})"
            _VERDICTS.append(line)
            print(line)
            raise
        line = f"PASS  criterion {number:>2}: {title}"
        _VERDICTS.append(line)
        print(line)

    return check


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
