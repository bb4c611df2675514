import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def record_criterion(request):
    """Store the one-line PASS/FAIL summary of an acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(number, passed, detail):
        lines[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(lines[number])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
