import re
from pathlib import Path

import pytest

from srpolicy import parse, parse_file
from srpolicy.runtime import default_registry

ROOT = Path(__file__).resolve().parent.parent
SHIPPED = ROOT / "src" / "srpolicy" / "data" / "multi_gate.sr"
BASELINE = Path(__file__).resolve().parent / "fixtures" / "baseline.sr"


@pytest.fixture(scope="session")
def shipped_source() -> str:
    return SHIPPED.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def shipped():
    policy, diags = parse_file(SHIPPED)
    assert not [d for d in diags if d.is_error]
    return policy


@pytest.fixture(scope="session")
def baseline_source() -> str:
    return BASELINE.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture
def fixed_clock():
    return lambda: 1711540200.123


def policy_from(src: str):
    return parse(src, "<test>")


_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.failed:
        _CRITERIA[key] = "FAIL"
    elif report.when == "call" and report.passed:
        _CRITERIA.setdefault(key, "PASS")
    elif report.skipped:
        _CRITERIA.setdefault(key, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), status in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {num} ({title}): {status}")
