import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line; the caller still asserts ``ok``."""
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.setdefault(number, []).append((ok, line))
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        for _, line in _ACCEPTANCE[number]:
            terminalreporter.write_line(line)
