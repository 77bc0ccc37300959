import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_lines():
    """Shared sink for one printed pass/fail line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)
