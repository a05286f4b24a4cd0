import os

import pytest

PAPER = os.environ.get("RABICAT_PAPER") == "1"

# criterion number -> (passed, detail), filled by the acceptance tests
ACCEPTANCE = {}


def pytest_collection_modifyitems(config, items):
    if PAPER:
        return
    skip = pytest.mark.skip(reason="full-size run; set RABICAT_PAPER=1")
    for item in items:
        if "paper" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
