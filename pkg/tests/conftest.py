import pytest

from hawkes_diffusive import parallel


@pytest.fixture(autouse=True)
def _reset_workers():
    yield
    parallel.set_workers(None)


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines.extend(getattr(mod, "RESULTS", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
