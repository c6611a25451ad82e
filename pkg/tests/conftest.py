import contextlib

import pytest

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion for the summary."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        note = {"text": ""}
        try:
            yield note
        except BaseException as exc:
            reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            _CRITERIA[number] = ("FAIL", title, note["text"] or reason)
            raise
        _CRITERIA[number] = ("PASS", title, note["text"])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, text = _CRITERIA[n]
        terminalreporter.write_line(f"[{status}] {n}. {title}" + (f": {text}" if text else ""))
