from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def read_fixture_ints(name):
    lines = (FIXTURES / name).read_text().splitlines()
    return [int(line) for line in lines if line.strip() and not line.startswith("#")]


@pytest.fixture
def schedule_3_7_150():
    return read_fixture_ints("schedule_3_7_150.txt")


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((props.get("criterion", report.nodeid), report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome, detail in _acceptance:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}" + (f" -- {detail}" if detail else ""))
