import pytest

# acceptance verdict lines, echoed at the end of the session
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict():
    def emit(n, name, ok, detail, elapsed, budget):
        line = (f"criterion {n} {'PASS' if ok and elapsed < budget else 'FAIL'}: {name}: "
                f"{detail} [{elapsed:.1f}s of {budget:.0f}s]")
        print(line)
        VERDICTS.append(line)
        return line
    return emit
