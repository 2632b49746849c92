import numpy as np
import pytest

from emweak import catalogue
from emweak.model import DomainSpec, DriftSpec, GrowthClass, PathFunctional, SdeProblem


def identity_g(x):
    return x[:, 0]


@pytest.fixture
def terminal_identity():
    return PathFunctional.terminal(identity_g, name="identity")


@pytest.fixture
def terminal_tanh():
    return PathFunctional.terminal(lambda x: np.tanh(x[:, 0]), bounded=True, name="tanh")


def plain(drift=None, x0=0.0, horizon=1.0, sigma=1.0, **kw):
    return SdeProblem.build(drift or catalogue.zero_drift(), x0=x0, horizon=horizon, sigma=sigma, **kw)


def killed(drift=None, a=-1.0, b=1.0, x0=0.0, **kw):
    return plain(drift, x0=x0, kind="killed", domain=DomainSpec.interval(a, b, **kw))


def custom_drift(fn, growth=GrowthClass.BOUNDED, alpha=1.0):
    return DriftSpec(fn, growth, holder_alpha=alpha, name="custom")


# ---- acceptance reporting ---------------------------------------------------

_CRITERIA: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA.setdefault(int(props["criterion"]), []).append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = _CRITERIA[n]
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict} ({len(outcomes)} check(s))")
