"""Shared test plumbing: a one-line-per-criterion acceptance report."""

import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for the end-of-run acceptance summary."""

    def record(num, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        tail = f" ({detail})" if detail else ""
        _LINES.append(f"[acceptance {num}] {name}: {status}{tail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.line(line)
