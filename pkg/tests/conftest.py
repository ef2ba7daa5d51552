import pytest

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""

    def report(number, name, passed, detail=""):
        _ACCEPTANCE[number] = (name, bool(passed), detail)
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        name, passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {name}: {detail}")
