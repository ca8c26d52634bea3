import pytest

# filled by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict():
    def record(criterion, ok, detail):
        ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[criterion])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=str):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
