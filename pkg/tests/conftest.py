import os

import pytest

# filled by tests/test_acceptance.py; printed after the run
ACCEPTANCE_LINES: dict[str, str] = {}
CRITERIA = [f"C{i}" for i in range(1, 12)]


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ELBOTUNE_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="hours-scale; set ELBOTUNE_LONG=1 to run")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def verdict():
    def record(tag: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[tag] = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        print(ACCEPTANCE_LINES[tag])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for tag in CRITERIA:
        line = ACCEPTANCE_LINES.get(tag)
        if line is None:
            line = f"NOT RUN {tag}: skipped in this session (long suite needs ELBOTUNE_LONG=1)"
        terminalreporter.write_line(line)
