import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvchip import chip
from cvchip import gaussian as gs


def bisect(f, lo, hi, tol=1e-15):
    """Plain bisection, used as an independent root oracle."""
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def sinc2(x):
    return (math.sin(x) / x) ** 2 if x else 1.0


# --- SHG curve constant ------------------------------------------------------

def test_sinc2_half_max_against_bisection():
    x = bisect(lambda x: sinc2(x) - 0.5, 1.0, 2.0)
    assert chip.SINC2_HALF_MAX == pytest.approx(x, abs=1e-12)
    assert chip.SINC2_HALF_MAX == pytest.approx(1.391557, abs=1e-6)
    assert sinc2(chip.SINC2_HALF_MAX) == pytest.approx(0.5, abs=1e-6)


def test_shg_efficiency_peak_and_half_width():
    assert chip.shg_efficiency(1554.45, 370.0, 1554.45, 0.5) == pytest.approx(370.0)
    for lam in (1554.2, 1554.7):
        assert chip.shg_efficiency(lam, 370.0, 1554.45, 0.5) == pytest.approx(185.0, abs=1e-9 * 370)


def test_shg_efficiency_rejects_bad_fwhm():
    with pytest.raises(ValueError):
        chip.shg_efficiency(1554.0, 370.0, 1554.45, 0.0)


@pytest.mark.parametrize("fwhm, length", [(0.5, 2.0), (0.25, 4.0), (1.0, 1.0)])
def test_interaction_length_anchor(fwhm, length):
    assert chip.interaction_length_from_fwhm(fwhm) == pytest.approx(length)


# --- couplers -----------------------------------------------------------------

def test_dc1_calibration(netlist):
    dc1 = netlist.tunable_couplers["DC1"]
    u = math.asin(math.sqrt(0.72))
    assert dc1.kappa_L == pytest.approx(u, abs=1e-15)
    assert math.sin(dc1.kappa_L) ** 2 == pytest.approx(0.72, abs=1e-9)
    d_zero = math.sqrt(math.pi ** 2 - u * u)
    assert d_zero == pytest.approx(2.973724, abs=1e-6)
    f = lambda d: (u * u / (u * u + d * d)) * math.sin(math.sqrt(u * u + d * d)) ** 2 - 0.005
    d = bisect(f, 1e-9, d_zero)
    assert dc1.detune_per_volt * 16 == pytest.approx(d, abs=1e-9)
    assert d < d_zero
    assert chip.coupler_sr_from_voltage(dc1, 0.0) == pytest.approx(0.72, abs=1e-12)
    assert chip.coupler_sr_from_voltage(dc1, 16.0) == pytest.approx(0.005, abs=1e-9)
    assert chip.coupler_sr_from_voltage(dc1, -16.0) == pytest.approx(0.005, abs=1e-9)


def test_calibration_to_transmission_zero():
    spec = chip.calibrate_coupler(0.72, 16.0, 0.0)
    u = math.asin(math.sqrt(0.72))
    assert spec.detune_per_volt * 16 == pytest.approx(math.sqrt(math.pi ** 2 - u * u), abs=1e-12)


@pytest.mark.parametrize("args", [(0.72, 16.0, 0.72), (0.72, 16.0, 0.9), (0.72, -1.0, 0.01)])
def test_calibration_errors(args):
    with pytest.raises(ValueError):
        chip.calibrate_coupler(*args)


def test_dc1_monotone_on_first_lobe(netlist):
    dc1 = netlist.tunable_couplers["DC1"]
    sr = chip.coupler_sr_from_voltage(dc1, np.linspace(0, 16, 2001))
    assert np.all(np.diff(sr) < 0)


@given(st.floats(-20, 20))
def test_coupler_even_and_bounded(v):
    spec = chip.calibrate_coupler(0.72, 16.0, 0.005, 20.0)
    a = chip.coupler_sr_from_voltage(spec, v)
    assert a == chip.coupler_sr_from_voltage(spec, -v)
    assert 0.0 <= a <= 1.0


def test_coupler_voltage_out_of_range(netlist):
    with pytest.raises(ValueError):
        chip.coupler_sr_from_voltage(netlist.tunable_couplers["DC1"], 25.0)


@pytest.mark.parametrize("name, sr0", [("DC1", 0.72), ("DC4", 0.85), ("DC5", 0.75)])
def test_voltage_for_sr_round_trip(netlist, name, sr0):
    spec = netlist.tunable_couplers[name]
    assert spec.sr_at_zero == sr0
    v = chip.voltage_for_sr(spec, 0.5)
    assert chip.coupler_sr_from_voltage(spec, v) == pytest.approx(0.5, abs=1e-12)


# --- phase shifters and pumps -----------------------------------------------------

@pytest.mark.parametrize("v, phi", [(10.0, math.pi), (0.0, 0.0), (-10.0, -math.pi)])
def test_phase_from_voltage(v, phi):
    assert chip.phase_from_voltage(chip.PhaseShifterSpec(10.0), v) == pytest.approx(phi)


@pytest.mark.parametrize("mu, p, r", [(0.030, 154, 0.37229), (0.030, 0, 0.0), (0.027, 154, 0.33506)])
def test_squeezing_from_pump(mu, p, r):
    assert chip.squeezing_from_pump(mu, p) == pytest.approx(r, abs=5e-6)


def test_negative_pump_rejected():
    with pytest.raises(ValueError):
        chip.squeezing_from_pump(0.03, -1.0)


# --- compiled circuit -------------------------------------------------------------

def test_pumps_off_gives_vacuum(netlist):
    for v in (0.0, 5.5, 16.0, -20.0):
        out = chip.output_state(netlist, chip.ControlSetting({"DC1": v, "LO1": 3.0, "DC4": 7.0}))
        assert np.allclose(out.cov, np.eye(4), atol=1e-10)


def test_routed_operating_point(netlist):
    out = chip.output_state(netlist, chip.ControlSetting({"DC1": 16.0}, (154.0, 0.0)))
    db = [10 * math.log10(gs.quadrature_variance(out, 0, th)) for th in (0.0, math.pi / 2)]
    assert db[0] == pytest.approx(-1.385, abs=0.01)
    assert db[1] == pytest.approx(1.973, abs=0.01)


def test_circuit_order_is_deterministic(netlist):
    setting = chip.ControlSetting({"DC1": 16.0}, (100.0, 50.0), (0.3, 1.0))
    a = chip.build_circuit(netlist, setting).ops
    b = chip.build_circuit(netlist, setting).ops
    assert a == b
    kinds = [type(op).__name__ for op in a]
    assert kinds[:2] == ["Squeeze", "Squeeze"]
    assert kinds.index("Coupler") < kinds.index("Homodyne")
    assert kinds[-2:] == ["Homodyne", "Homodyne"]
    squeeze_ops = [op for op in a if isinstance(op, chip.Squeeze)]
    assert [op.angle for op in squeeze_ops] == [0.15, 0.5]


def test_bad_voltage_rejected(netlist):
    with pytest.raises(ValueError):
        chip.build_circuit(netlist, chip.ControlSetting({"LO1": 11.0}))


@given(st.floats(0.005, 0.06), st.floats(0.05, 1.0), st.floats(0.0, 200.0))
def test_lossy_squeezer_closed_form(mu, eta, p):
    """Squeezer followed by one lumped loss reproduces the lossy squeezing law."""
    r = chip.squeezing_from_pump(mu, p)
    s = gs.loss(gs.squeeze(gs.vacuum(1), 0, r), 0, eta)
    vm, vp = chip.squeezing_variances(r, eta)
    assert gs.quadrature_variance(s, 0, 0.0) == pytest.approx(vm, abs=1e-10)
    assert gs.quadrature_variance(s, 0, math.pi / 2) == pytest.approx(vp, abs=1e-10)
    assert vm == pytest.approx(eta * math.exp(-2 * mu * math.sqrt(p)) + 1 - eta, abs=1e-12)


@given(st.floats(0.0, 0.06), st.floats(0.05, 1.0), st.floats(1.0, 200.0))
def test_chip_acts_as_one_budget_loss(mu, eta_scale, p):
    """The whole compiled chain acts as one loss equal to the budget total."""
    from cvchip import config
    net = config.netlist_from_dict(config.load_config())
    wg = dataclasses.replace(net.pp_waveguides[0], mu=max(mu, 1e-6))
    net = dataclasses.replace(net, pp_waveguides=(wg, net.pp_waveguides[1]),
                              excess_transmission={1: eta_scale, 2: 1.0})
    # DC1 at the transmission zero leaves mode 0 uncoupled
    zero = chip.calibrate_coupler(0.72, 16.0, 0.0, 20.0)
    net = dataclasses.replace(net, tunable_couplers={**net.tunable_couplers, "DC1": zero})
    out = chip.output_state(net, chip.ControlSetting({"DC1": 16.0}, (p, 0.0)))
    eta = chip.efficiency_budget(net, 1).total / (1 - net.dc1_insertion_loss)
    vm, vp = chip.squeezing_variances(wg.mu * math.sqrt(p), eta)
    assert gs.quadrature_variance(out, 0, 0.0) == pytest.approx(vm, abs=1e-10)
    assert gs.quadrature_variance(out, 0, math.pi / 2) == pytest.approx(vp, abs=1e-10)


def _symmetric(netlist):
    wg = netlist.pp_waveguides[0]
    return dataclasses.replace(netlist, pp_waveguides=(wg, wg))


@given(st.floats(0.0, 160.0), st.floats(0.0, 2 * np.pi))
def test_entangled_configuration_is_phase_flat(netlist, p, pump_phase):
    net = _symmetric(netlist)
    v50 = chip.voltage_for_sr(net.tunable_couplers["DC1"], 0.5)
    out = chip.output_state(net, chip.ControlSetting(
        {"DC1": v50}, (p, p), (pump_phase, pump_phase + np.pi)))
    for m in (0, 1):
        v = [gs.quadrature_variance(out, m, th) for th in np.linspace(0, np.pi, 13)]
        assert max(v) - min(v) <= 1e-10


def test_default_chip_out_of_phase_levels_are_near_flat(netlist):
    """Unequal gains make the default chip only approximately flat."""
    out = chip.output_state(netlist, chip.ControlSetting({"DC1": 5.5}, (122.0, 122.0), (0.0, np.pi)))
    for m in (0, 1):
        db = [10 * math.log10(gs.quadrature_variance(out, m, th)) for th in np.linspace(0, np.pi, 91)]
        assert 0.0 < min(db) and max(db) - min(db) < 0.3


# --- efficiency budget -----------------------------------------------------------

def test_budget_fixed_factors(netlist):
    b = chip.efficiency_budget(netlist, 1)
    fixed = np.prod([b.factors[k] for k in ("dc1", "filter", "facet", "qe", "dark_noise")])
    assert fixed == pytest.approx(0.67192, abs=5e-6)
    assert b.factors["dark_noise"] == pytest.approx(1 - 10 ** -1.7)
    assert b.factors["dark_noise"] == pytest.approx(0.98005, abs=5e-6)


def test_budget_totals(netlist):
    assert chip.efficiency_budget(netlist, 1).total == pytest.approx(0.52, abs=1e-5)
    assert chip.efficiency_budget(netlist, 2).total == pytest.approx(0.54, abs=1e-5)
    assert chip.efficiency_budget(netlist, 1).estimated == pytest.approx(0.5502, abs=1e-4)
    assert chip.efficiency_budget(netlist, 2).estimated == pytest.approx(0.6001, abs=1e-4)


def test_implied_path_length(netlist):
    L = chip.implied_path_length(netlist, 1, 0.55)
    assert L == pytest.approx(6.2, abs=0.05)
    assert 10 ** (-0.014 * L) == pytest.approx(0.8186, abs=1e-3)
    assert chip.implied_path_length(netlist, 2, 0.60) == pytest.approx(5.755, abs=0.01)


def test_budget_all_ones():
    spec = chip.DetectorSpec(quantum_efficiency=1.0, dark_clearance_db=float("inf"))
    assert spec.efficiency == 1.0


def test_budget_is_order_independent(netlist):
    b = chip.efficiency_budget(netlist, 2)
    vals = list(b.factors.values())
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert np.prod(vals[::-1]) == pytest.approx(b.total, rel=1e-15)


def test_budget_rejects_bad_arm(netlist):
    with pytest.raises(ValueError):
        chip.efficiency_budget(netlist, 3)


def test_missing_path_length(netlist):
    net = dataclasses.replace(netlist, path_lengths={1: {"pre_dc1": 1.0}, 2: {}})
    with pytest.raises(ValueError):
        chip.efficiency_budget(net, 1)


# --- projection ------------------------------------------------------------------

def test_projection_examples(netlist):
    ref = netlist.pp_waveguides[0]
    assert chip.project_squeezing(500, 4.0, 0.87, ref) == pytest.approx(-7.2, abs=0.05)
    assert chip.project_squeezing(500, 4.0, 1.0, ref) == pytest.approx(-11.65, abs=0.01)
    assert chip.project_squeezing(0, 4.0, 0.87, ref) == 0.0
    assert 0.030 * (4.0 / 2.0) * math.sqrt(500) == pytest.approx(1.3416, abs=1e-4)
