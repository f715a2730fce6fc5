import numpy as np
import pytest

from geolorenz import millefeuille as mfm
from geolorenz import symbolic, thermo
from geolorenz.lorenz_map import DEFAULT_PARAMS

# test profile: smaller than the CLI defaults so the suite stays at desk scale
N_TEST = 14
GRID_TEST = 512


@pytest.fixture(scope="session")
def params():
    return DEFAULT_PARAMS


@pytest.fixture(scope="session")
def band_a():
    return mfm.Band.from_seed(symbolic.delta_dense_periodic_orbit(0.2, max_period=12))


@pytest.fixture(scope="session")
def band_b():
    return mfm.Band.from_seed(symbolic.delta_dense_periodic_orbit(0.25, max_period=12, skip=3))


@pytest.fixture(scope="session")
def mf14(band_a):
    return mfm.build_millefeuille(band_a, N_max=N_TEST)


@pytest.fixture(scope="session")
def zero_table(mf14):
    tab = thermo.induced_potential_table(mf14, thermo.Potential.zero(), GRID_TEST)
    thermo.holder_constants_estimate(tab)
    return tab


@pytest.fixture(scope="session")
def zero_op(zero_table):
    return thermo.TransferOperator(zero_table)


@pytest.fixture(scope="session")
def test_table(mf14):
    tab = thermo.induced_potential_table(mf14, thermo.TEST_POTENTIAL, GRID_TEST)
    thermo.holder_constants_estimate(tab)
    return tab


@pytest.fixture(scope="session")
def test_op(test_table):
    return thermo.TransferOperator(test_table)


@pytest.fixture(scope="session")
def test_report(test_table, test_op):
    return thermo.solve_pressure_root(test_op, test_table)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and not rep.failed:
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        msg = str(rep.longrepr).strip().splitlines()
        detail = (detail + "; " if detail else "") + (msg[-1] if msg else "error")
    _ACCEPTANCE[m.args[0]] = (m.args[1], "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}  {title}  [{detail}]")
