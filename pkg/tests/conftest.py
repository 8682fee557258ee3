import json
import re

import pytest

from kgconvert.transit import FIXTURES_DIR, pipeline_path

ACCEPTANCE_FILE = "test_acceptance.py"
_criteria: dict[int, list[str]] = {}


@pytest.fixture(scope="session")
def manifest():
    return json.loads((FIXTURES_DIR / "manifest.json").read_text())


@pytest.fixture(scope="session")
def fixture_zip() -> bytes:
    return (FIXTURES_DIR / "mini-gtfs.zip").read_bytes()


@pytest.fixture(scope="session")
def milano_zip() -> bytes:
    return (FIXTURES_DIR / "mini-milano.zip").read_bytes()


@pytest.fixture(scope="session")
def madrid_path():
    return pipeline_path("madrid")


def pytest_runtest_logreport(report):
    if ACCEPTANCE_FILE not in report.nodeid:
        return
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcomes = _criteria[n]
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}")
