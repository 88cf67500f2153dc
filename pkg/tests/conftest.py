import numpy as np
import pytest
from hypothesis import settings

from rislocus.arraygeom import CarrierSpec

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def carrier():
    return CarrierSpec(3.5e9)


@pytest.fixture
def lam(carrier):
    return carrier.wavelength


def wrapped_diff(a, b):
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, title): acceptance criterion k")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    k, title = mark.args
    detail = "; ".join(v for name, v in item.user_properties if name == "detail")
    item.config._criteria.append((k, title, rep.passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(getattr(config, "_criteria", []), key=lambda r: r[0])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k, title, ok, detail in rows:
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
