import numpy as np
import pytest

from le2.env import ArmToolsToys, EnvConfig


@pytest.fixture
def env():
    return ArmToolsToys(EnvConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    n = props.get("criterion")
    if not n:
        return
    detail = f"  ({props['detail']})" if "detail" in props else ""
    if report.failed:
        _criteria[n] = "FAIL" + detail
    elif report.when == "call" and report.passed:
        _criteria.setdefault(n, "PASS" + detail)


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    mark = request.node.get_closest_marker("criterion")
    if mark:
        request.node.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(f"criterion {n:2d}: {_criteria[n]}")
