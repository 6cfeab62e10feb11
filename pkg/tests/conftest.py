import warnings

import pytest
from hypothesis import HealthCheck, settings

from meshfair.scenario import BUNDLED, load_scenario

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# results per acceptance criterion; parametrized cases share one summary line
ACCEPTANCE_RESULTS = {}


def _line(number, passed, detail):
    return f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def record_acceptance(number, passed, detail):
    ACCEPTANCE_RESULTS.setdefault(number, []).append((bool(passed), detail))
    print(_line(number, passed, detail))


@pytest.fixture(scope="session")
def record():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        cases = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(_line(k, all(p for p, _ in cases), " | ".join(d for _, d in cases)))


@pytest.fixture(scope="session")
def scenarios():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {name: load_scenario(name) for name in BUNDLED}
