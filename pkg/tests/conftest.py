import numpy as np
import pytest

from zpm import config
from zpm.dynamics import SpacecraftParams, orbit_rate_body
from zpm.environment import AeroParams, TorqueModel
from zpm.guidance_adjust import sensitivity_series
from zpm.nominal import BoundaryConditions, generate_nominal
from zpm.simulation import Scenario


@pytest.fixture(scope="session")
def params():
    return SpacecraftParams()


@pytest.fixture(scope="session")
def aero(params):
    return AeroParams.for_orbit(params.orbit_rate, params.mu)


@pytest.fixture(scope="session")
def model(params, aero):
    return TorqueModel(params, aero)


@pytest.fixture(scope="session")
def bounds():
    return BoundaryConditions.reference_maneuver()


@pytest.fixture(scope="session")
def cfg():
    return config.load()


@pytest.fixture(scope="session")
def nominal(cfg):
    return config.nominal(cfg)


@pytest.fixture(scope="session")
def series(nominal, model):
    return sensitivity_series(nominal, model)


@pytest.fixture(scope="session")
def short_nominal(params, model):
    """600 s attitude hold with a CMG momentum change, for fast closed-loop checks."""
    s = np.array([0.01, -0.02, 0.03])
    w = orbit_rate_body(s, params.orbit_rate)
    b = BoundaryConditions(s, s, w, w, np.array([100.0, -200.0, 300.0]), np.zeros(3), 0.0, 600.0)
    return generate_nominal(b, params, model, step=1.0, check=False)


@pytest.fixture(scope="session")
def base(short_nominal, model):
    return Scenario(short_nominal, model, model, model, mode="rtac", log_step=10.0).with_series()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mrps(rng, n, max_norm=1.0):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (max_norm * rng.random(n) ** (1 / 3))[:, None]


# Acceptance criteria report: tests marked ``criterion(n, title)`` store their
# measured values with ``record_property("detail", ...)``; one line per
# criterion is printed at the end of the session.
_CRITERIA: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "FAIL"
    _CRITERIA[number] = f"criterion {number:2d} {status}  {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
