import pytest

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class Criterion:
    """Records one acceptance criterion's verdict for the end-of-run summary."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        _ACCEPTANCE[number] = (False, f"{title}: did not finish")

    def check(self, ok: bool, detail: str) -> None:
        _ACCEPTANCE[self.number] = (bool(ok), f"{self.title}: {detail}")
        assert ok, detail


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, text = _ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {text}")
