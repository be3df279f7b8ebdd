from contextlib import contextmanager

import pytest

RESULTS = []


def _record(number, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number} ({title}): {detail}"
    RESULTS.append(line)
    print(line)


@pytest.fixture
def criterion():
    """Context manager that logs one pass/fail line per acceptance criterion.

    The body stores a short summary in ``note["detail"]``; any exception,
    including a failed assert, records FAIL and re-raises.
    """

    @contextmanager
    def check(number, title):
        note = {"detail": ""}
        try:
            yield note
        except BaseException as exc:
            _record(number, title, False, f"{note['detail']} {type(exc).__name__}: {exc}".strip())
            raise
        _record(number, title, True, note["detail"])

    return check


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
