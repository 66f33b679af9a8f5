import pytest

_ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; pass --runslow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def criterion_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    by_number = {int(line.split(":")[0].split()[1]): line for line in _ACCEPTANCE_LINES}
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        default = f"criterion {n:>2}: SKIP  not run (slow criteria need --runslow)"
        terminalreporter.write_line(by_number.get(n, default))
