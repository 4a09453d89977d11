import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion and return the verdict.

    Each check is ``(label, value, tolerance)`` and passes when value <= tolerance.
    """

    def record(number: int, title: str, *checks: tuple[str, float, float]) -> bool:
        passed = all(value <= tol for _, value, tol in checks)
        detail = "; ".join(f"{label} {value:.3e} (tol {tol:.1e})" for label, value, tol in checks)
        line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}"
        print(line)
        _ACCEPTANCE[number] = line
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
