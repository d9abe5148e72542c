import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        prev = _results.get(key)
        if prev is None or prev[0] == "PASS":
            _results[key] = (status, m.group(2))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        status, name = _results[key]
        terminalreporter.write_line(f"criterion {key:>2} {status}: {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
