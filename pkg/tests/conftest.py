import json
from pathlib import Path

import pytest

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

_acceptance_lines = []


@pytest.fixture
def scenario_doc():
    def load(name):
        return json.loads((SCENARIOS / f"{name}.json").read_text())

    return load


@pytest.fixture
def record():
    """Record one acceptance line; the summary is printed at the end of the run."""

    def _record(criterion, ok, detail=""):
        _acceptance_lines.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
