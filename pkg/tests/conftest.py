import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from curiopath.scenario import load_scenario

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def discrete():
    return load_scenario("discrete_case")


@pytest.fixture(scope="session")
def cont1():
    return load_scenario("continuous_case_1")


@pytest.fixture(scope="session")
def cont2():
    return load_scenario("continuous_case_2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------------- acceptance

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def criterion(request, capsys):
    """Callable ``record(ok, detail)`` printing the criterion's verdict line."""
    name = request.node.get_closest_marker("acceptance").args[0]

    def record(ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        request.config.stash[_VERDICTS][request.node.nodeid] = line
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    verdicts = item.config.stash[_VERDICTS]
    if marker and rep.failed and item.nodeid not in verdicts:
        # crashed before reaching its verdict
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else rep.when
        verdicts[item.nodeid] = f"FAIL  {marker.args[0]}: error in {rep.when}: {msg}"


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash[_VERDICTS]
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts.values():
            terminalreporter.write_line(line)
