import pytest

_LINES = []


class Recorder:
    """Collects one PASS/FAIL line per acceptance check."""

    def __init__(self, criterion: str):
        self.criterion = criterion
        self.failed = []

    def check(self, name: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.criterion} :: {name}" + (f" :: {detail}" if detail else "")
        _LINES.append(line)
        print(line)
        if not ok:
            self.failed.append(name)
        return ok

    def finish(self):
        ok = not self.failed
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.criterion}" + ("" if ok else f" ({len(self.failed)} sub-check(s) failed)")
        _LINES.append(line)
        print(line)
        assert ok, f"failed: {', '.join(self.failed)}"


@pytest.fixture
def recorder():
    return Recorder


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
