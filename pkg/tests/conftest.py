import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects (number, name, passed, detail) rows from the acceptance tests."""
    return request.config.stash.setdefault(_RESULTS, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_RESULTS, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(rows):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d} {name}: {detail}")
