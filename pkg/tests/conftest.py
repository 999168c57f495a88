import pytest

from cvchip import chip, config

# --- physicality guard: every compiled circuit run in the suite is checked --

CIRCUIT_CHECKS = {"runs": 0, "worst": 0.0}
_original_run = chip.Circuit.run


def _checked_run(self, state=None):
    out = _original_run(self, state)
    ev = out.uncertainty_eigenvalues()
    CIRCUIT_CHECKS["runs"] += 1
    CIRCUIT_CHECKS["worst"] = min(CIRCUIT_CHECKS["worst"], float(ev.min()))
    assert ev.min() >= -1e-9, f"circuit output violates the uncertainty relation: {ev.min()}"
    return out


chip.Circuit.run = _checked_run


@pytest.fixture
def circuit_checks():
    return CIRCUIT_CHECKS


# --- shared configuration ---------------------------------------------------

@pytest.fixture(scope="session")
def doc():
    return config.load_config()


@pytest.fixture(scope="session")
def netlist(doc):
    return config.netlist_from_dict(doc)


@pytest.fixture(scope="session")
def squeeze_setup(doc):
    net = config.experiment_netlist(doc, "squeeze")
    sec = config.experiment_section(doc, "squeeze")
    acq = config.acquisition_preset(doc, sec["acquisition"])
    return net, config.schedule_from_dict(sec["schedule"], net), acq


@pytest.fixture(scope="session")
def entangle_setup(doc):
    net = config.experiment_netlist(doc, "entangle")
    sec = config.experiment_section(doc, "entangle")
    acq = config.acquisition_preset(doc, sec["acquisition"])
    return net, config.schedule_from_dict(sec["schedule"], net), acq, sec["pump_power"]


# --- acceptance summary lines ----------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    item.config._acceptance[marker.args[0]] = (rep.passed, item.name, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, name, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {name}  {detail}")
