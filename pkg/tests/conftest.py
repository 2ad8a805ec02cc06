import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from flatcap.approx import ApproxConfig, algorithm1

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def approx_n0_2():
    return algorithm1(ApproxConfig(n0=2))


@pytest.fixture(scope="session")
def sv(approx_n0_2):
    return approx_n0_2.polytope


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary ----------------------------------------------------
# Tests marked ``acceptance(n, "title")`` are grouped by criterion; the
# terminal summary prints one PASS/FAIL line per criterion.

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, title = mark.args
    entry = _ACCEPTANCE.setdefault(n, {"title": title, "failed": [], "passed": 0})
    if rep.failed:
        entry["failed"].append(item.name)
    elif rep.when == "call":
        entry["passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        verdict = "FAIL" if e["failed"] else "PASS"
        line = f"criterion {n:2d} {verdict}: {e['title']}"
        if e["failed"]:
            line += f" (failed: {', '.join(e['failed'])})"
        terminalreporter.write_line(line)
