"""Six-waveguide squeezer/entangler chip and its control maps.

Two periodically poled squeezers feed a tunable coupler (DC1); each output
arm then passes a pump filter (DC2/DC3 on arms 1/2), the output facet and a
homodyne coupler (DC4/DC5) where a phase-shifted local oscillator selects
the measured quadrature.  Only the two signal modes are simulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

from . import gaussian as gs

ARMS = (1, 2)
FILTER_OF_ARM = {1: "DC2", 2: "DC3"}
HOMODYNE_COUPLER_OF_ARM = {1: "DC4", 2: "DC5"}
SHIFTER_OF_ARM = {1: "LO1", 2: "LO2"}
TUNABLE_COUPLERS = ("DC1", "DC4", "DC5")
FIXED_COUPLERS = ("DC2", "DC3")
PHASE_SHIFTERS = ("LO1", "LO2")


def _sinc(x):
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


# abscissa where sinc^2 drops to one half
SINC2_HALF_MAX = brentq(lambda x: float(_sinc(x)) ** 2 - 0.5, 1.0, 2.0, xtol=1e-15)


def _check_fraction(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class PPWaveguideSpec:
    mu: float  # mW^-1/2
    interaction_length: float  # cm
    phase_match_wavelength: float  # nm, fundamental
    shg_fwhm: float  # nm
    norm_conversion_efficiency: float  # %/W
    poling_period: float = 16.12  # um, metadata only

    def __post_init__(self):
        if self.mu <= 0 or self.interaction_length <= 0 or self.shg_fwhm <= 0:
            raise ValueError("mu, interaction_length and shg_fwhm must be positive")


@dataclass(frozen=True)
class TunableCouplerSpec:
    """Electro-optically detuned coupler, ``SR(V) = u^2/(u^2+d^2) sin^2(sqrt(u^2+d^2))``."""

    sr_at_zero: float
    kappa_L: float
    detune_per_volt: float
    voltage_range: float

    def __post_init__(self):
        _check_fraction("sr_at_zero", self.sr_at_zero)
        if abs(math.sin(self.kappa_L) ** 2 - self.sr_at_zero) > 1e-9:
            raise ValueError("kappa_L does not reproduce sr_at_zero")


@dataclass(frozen=True)
class PhaseShifterSpec:
    v_pi: float
    voltage_range: float = 10.0

    def __post_init__(self):
        if self.v_pi <= 0:
            raise ValueError(f"v_pi must be positive, got {self.v_pi}")


@dataclass(frozen=True)
class DetectorSpec:
    quantum_efficiency: float = 0.99
    dark_clearance_db: float = 17.0

    @property
    def dark_factor(self) -> float:
        """Dark noise folded into an equivalent transmissivity."""
        return 1.0 - 10.0 ** (-self.dark_clearance_db / 10.0)

    @property
    def efficiency(self) -> float:
        return self.quantum_efficiency * self.dark_factor


@dataclass(frozen=True)
class ChipNetlist:
    pp_waveguides: tuple[PPWaveguideSpec, PPWaveguideSpec]
    fixed_couplers: Mapping[str, float]
    tunable_couplers: Mapping[str, TunableCouplerSpec]
    phase_shifters: Mapping[str, PhaseShifterSpec]
    propagation_loss_signal: float = 0.14  # dB/cm
    propagation_loss_pump: float = 0.55  # dB/cm, pump powers are quoted inside the waveguide
    path_lengths: Mapping[int, Mapping[str, float]] = field(default_factory=dict)  # cm
    facet_loss: float = 0.13
    dc1_insertion_loss: float = 0.005
    excess_transmission: Mapping[int, float] = field(default_factory=lambda: {1: 1.0, 2: 1.0})
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    pump_isolation_db: float = 20.0  # recorded, residual pump not simulated
    shg_length_anchor: tuple[float, float] = (0.5, 2.0)  # (fwhm nm, length cm)

    def __post_init__(self):
        if len(self.pp_waveguides) != 2:
            raise ValueError("the chip has exactly two periodically poled waveguides")
        for name in FIXED_COUPLERS:
            if name not in self.fixed_couplers:
                raise ValueError(f"missing fixed coupler {name}")
            _check_fraction(name, self.fixed_couplers[name])
        for name in TUNABLE_COUPLERS:
            if name not in self.tunable_couplers:
                raise ValueError(f"missing tunable coupler {name}")
        for name in PHASE_SHIFTERS:
            if name not in self.phase_shifters:
                raise ValueError(f"missing phase shifter {name}")
        _check_fraction("facet_loss", self.facet_loss)
        _check_fraction("dc1_insertion_loss", self.dc1_insertion_loss)
        _check_fraction("quantum_efficiency", self.detector.quantum_efficiency)
        for arm, t in self.excess_transmission.items():
            _check_fraction(f"excess_transmission[{arm}]", t)
        for arm, segs in self.path_lengths.items():
            for seg, length in segs.items():
                if length < 0:
                    raise ValueError(f"negative path length {seg} on arm {arm}")

    @property
    def electrodes(self) -> tuple[str, ...]:
        return TUNABLE_COUPLERS + PHASE_SHIFTERS

    def electrode_range(self, name: str) -> float:
        if name in self.tunable_couplers:
            return self.tunable_couplers[name].voltage_range
        if name in self.phase_shifters:
            return self.phase_shifters[name].voltage_range
        raise KeyError(f"unknown electrode {name!r}")

    def path_length(self, arm: int, segment: str) -> float:
        try:
            return float(self.path_lengths[arm][segment])
        except KeyError:
            raise ValueError(f"netlist has no {segment!r} path length for arm {arm}") from None


# --- electro-optic maps -----------------------------------------------------

def _coupled_mode_sr(u, d):
    g2 = u * u + d * d
    return (u * u / g2) * np.sin(np.sqrt(g2)) ** 2


def coupler_sr_from_voltage(spec: TunableCouplerSpec, v):
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(v) > spec.voltage_range + 1e-12):
        raise ValueError(f"voltage {v} outside +/-{spec.voltage_range} V")
    sr = _coupled_mode_sr(spec.kappa_L, spec.detune_per_volt * v)
    return float(sr) if sr.ndim == 0 else sr


def calibrate_coupler(sr_at_zero: float, v_min: float, sr_min: float,
                      voltage_range: float | None = None) -> TunableCouplerSpec:
    """Fit the detuned-coupler model through ``SR(0)`` and ``SR(v_min)``."""
    if not 0.0 <= sr_min < sr_at_zero <= 1.0:
        raise ValueError(f"need 0 <= sr_min < sr_at_zero <= 1, got {sr_min}, {sr_at_zero}")
    if v_min <= 0:
        raise ValueError("v_min must be positive")
    u = math.asin(math.sqrt(sr_at_zero))
    d_zero = math.sqrt(math.pi ** 2 - u * u)  # first transmission zero
    if sr_min == 0.0:
        d = d_zero
    else:
        f = lambda d: _coupled_mode_sr(u, d) - sr_min
        # first lobe: sr falls monotonically from sr_at_zero to 0 on (0, d_zero)
        if f(1e-12) * f(d_zero) > 0:
            raise ValueError(f"no root for sr_min={sr_min} in (0, {d_zero:.6f})")
        d = brentq(f, 1e-12, d_zero, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return TunableCouplerSpec(sr_at_zero, u, d / v_min,
                              voltage_range if voltage_range is not None else v_min)


def voltage_for_sr(spec: TunableCouplerSpec, sr: float) -> float:
    """Smallest positive voltage giving splitting ratio ``sr`` (first lobe)."""
    if not 0.0 <= sr <= spec.sr_at_zero:
        raise ValueError(f"sr={sr} not reachable from sr_at_zero={spec.sr_at_zero}")
    u = spec.kappa_L
    d_zero = math.sqrt(math.pi ** 2 - u * u)
    d = brentq(lambda d: _coupled_mode_sr(u, d) - sr, 0.0, d_zero, xtol=1e-15)
    v = d / spec.detune_per_volt
    if v > spec.voltage_range:
        raise ValueError(f"sr={sr} needs {v:.3f} V, beyond +/-{spec.voltage_range} V")
    return v


def phase_from_voltage(spec: PhaseShifterSpec, v):
    return np.pi * v / spec.v_pi


def squeezing_from_pump(mu: float, p_pump: float) -> float:
    if p_pump < 0:
        raise ValueError(f"pump power must be non-negative, got {p_pump}")
    return mu * math.sqrt(p_pump)


def squeezing_variances(r: float, eta: float) -> tuple[float, float]:
    """Squeezed and anti-squeezed variances after a lumped loss ``eta``.

    Written as ``eta*exp(-+2r) + 1 - eta`` so that the vacuum (r = 0) sits
    at shot noise; the ``+ 1`` form without ``- eta`` does not.
    """
    return (eta * math.exp(-2 * r) + 1 - eta, eta * math.exp(2 * r) + 1 - eta)


# --- control setting and compilation -------------------------------------

@dataclass(frozen=True)
class ControlSetting:
    voltages: Mapping[str, float]
    pump_powers: tuple[float, float] = (0.0, 0.0)  # mW
    pump_phases: tuple[float, float] = (0.0, 0.0)  # rad

    def validate(self, netlist: ChipNetlist) -> None:
        for name, v in self.voltages.items():
            rng = netlist.electrode_range(name)
            if abs(v) > rng + 1e-12:
                raise ValueError(f"{name} voltage {v} V outside +/-{rng} V")
        for p in self.pump_powers:
            if p < 0:
                raise ValueError(f"negative pump power {p}")

    def voltage(self, name: str) -> float:
        return float(self.voltages.get(name, 0.0))

    def lo_phase(self, netlist: ChipNetlist, arm: int) -> float:
        name = SHIFTER_OF_ARM[arm]
        return phase_from_voltage(netlist.phase_shifters[name], self.voltage(name))


@dataclass(frozen=True)
class Squeeze:
    mode: int
    r: float
    angle: float

    def apply(self, state):
        return gs.squeeze(state, self.mode, self.r, self.angle)


@dataclass(frozen=True)
class Loss:
    mode: int
    eta: float
    label: str

    def apply(self, state):
        return gs.loss(state, self.mode, self.eta)


@dataclass(frozen=True)
class Coupler:
    mode_a: int
    mode_b: int
    sr: float
    label: str

    def apply(self, state):
        return gs.beamsplitter(state, self.mode_a, self.mode_b, self.sr)


@dataclass(frozen=True)
class Homodyne:
    """Measurement stage: balanced detection behind ``coupler``.

    Coupler imbalance changes only the LO-referenced gain, which the
    shot-noise normalization removes, so ``coupler_sr`` is bookkeeping.
    The detector efficiency is applied as a final loss.
    """

    mode: int
    lo_phase: float
    coupler: str
    coupler_sr: float
    efficiency: float

    def apply(self, state):
        return gs.loss(state, self.mode, self.efficiency)


@dataclass(frozen=True)
class Circuit:
    ops: tuple
    n_modes: int = 2

    @property
    def homodynes(self) -> tuple[Homodyne, ...]:
        return tuple(op for op in self.ops if isinstance(op, Homodyne))

    def run(self, state: gs.GaussianState | None = None) -> gs.GaussianState:
        state = gs.vacuum(self.n_modes) if state is None else state
        for op in self.ops:
            state = op.apply(state)
        return state


def _db_transmission(db_per_cm: float, length_cm: float) -> float:
    return 10.0 ** (-0.1 * db_per_cm * length_cm)


def build_circuit(netlist: ChipNetlist, setting: ControlSetting) -> Circuit:
    """Compile a control setting into an ordered list of Gaussian operations.

    Modes 0 and 1 are the signals of waveguides 1 and 2; after DC1 they are
    the inputs of HD1 and HD2.  The squeezing axis is half the pump phase.
    """
    setting.validate(netlist)
    ops: list = []
    for k, wg in enumerate(netlist.pp_waveguides):
        r = squeezing_from_pump(wg.mu, setting.pump_powers[k])
        ops.append(Squeeze(k, r, 0.5 * setting.pump_phases[k]))
    for arm in ARMS:
        t = _db_transmission(netlist.propagation_loss_signal, netlist.path_length(arm, "pre_dc1"))
        ops.append(Loss(arm - 1, t, "propagation_pre_dc1"))
    sr1 = coupler_sr_from_voltage(netlist.tunable_couplers["DC1"], setting.voltage("DC1"))
    ops.append(Coupler(0, 1, sr1, "DC1"))
    for arm in ARMS:
        m = arm - 1
        ops.append(Loss(m, netlist.fixed_couplers[FILTER_OF_ARM[arm]], FILTER_OF_ARM[arm]))
        t = _db_transmission(netlist.propagation_loss_signal, netlist.path_length(arm, "post_dc1"))
        ops.append(Loss(m, t, "propagation_post_dc1"))
        ops.append(Loss(m, netlist.excess_transmission.get(arm, 1.0), "excess"))
        ops.append(Loss(m, 1.0 - netlist.facet_loss, "facet"))
    for arm in ARMS:
        name = HOMODYNE_COUPLER_OF_ARM[arm]
        sr = coupler_sr_from_voltage(netlist.tunable_couplers[name], setting.voltage(name))
        ops.append(Homodyne(arm - 1, setting.lo_phase(netlist, arm), name, sr,
                            netlist.detector.efficiency))
    return Circuit(tuple(ops))


def output_state(netlist: ChipNetlist, setting: ControlSetting) -> gs.GaussianState:
    return build_circuit(netlist, setting).run()


# --- efficiency bookkeeping ------------------------------------------------

@dataclass(frozen=True)
class EfficiencyBudget:
    arm: int
    factors: Mapping[str, float]

    @property
    def total(self) -> float:
        return float(np.prod(list(self.factors.values())))

    @property
    def estimated(self) -> float:
        """Product of the itemized design losses, without the excess factor."""
        return float(np.prod([v for k, v in self.factors.items() if k != "excess"]))

    def table(self) -> str:
        rows = [f"{k:<14s} {v:.5f}" for k, v in self.factors.items()]
        rows.append(f"{'total':<14s} {self.total:.5f}")
        return "\n".join(rows)


def _non_propagation_factors(netlist: ChipNetlist, arm: int) -> dict[str, float]:
    return {
        "dc1": 1.0 - netlist.dc1_insertion_loss,
        "filter": netlist.fixed_couplers[FILTER_OF_ARM[arm]],
        "facet": 1.0 - netlist.facet_loss,
        "qe": netlist.detector.quantum_efficiency,
        "dark_noise": netlist.detector.dark_factor,
    }


def efficiency_budget(netlist: ChipNetlist, arm: int) -> EfficiencyBudget:
    if arm not in ARMS:
        raise ValueError(f"arm must be 1 or 2, got {arm}")
    length = netlist.path_length(arm, "pre_dc1") + netlist.path_length(arm, "post_dc1")
    factors = {"propagation": _db_transmission(netlist.propagation_loss_signal, length)}
    factors.update(_non_propagation_factors(netlist, arm))
    factors["excess"] = float(netlist.excess_transmission.get(arm, 1.0))
    return EfficiencyBudget(arm, factors)


def implied_path_length(netlist: ChipNetlist, arm: int, eta_target: float) -> float:
    """Signal path length (cm) that makes the design budget equal ``eta_target``."""
    fixed = float(np.prod(list(_non_propagation_factors(netlist, arm).values())))
    if not 0 < eta_target <= fixed:
        raise ValueError(f"eta_target {eta_target} not reachable (non-propagation product {fixed:.5f})")
    return -10.0 * math.log10(eta_target / fixed) / netlist.propagation_loss_signal


# --- SHG tuning and projections --------------------------------------------

def shg_efficiency(wavelength, eta0: float, lambda0: float, fwhm: float):
    """Normalized SHG efficiency (%/W) of a uniform grating versus fundamental wavelength."""
    if fwhm <= 0:
        raise ValueError(f"fwhm must be positive, got {fwhm}")
    x = 2.0 * SINC2_HALF_MAX * (np.asarray(wavelength, dtype=float) - lambda0) / fwhm
    out = eta0 * _sinc(x) ** 2
    return float(out) if out.ndim == 0 else out


def interaction_length_from_fwhm(fwhm: float, anchor: tuple[float, float] = (0.5, 2.0)) -> float:
    """Acceptance bandwidth scales as 1/L; ``anchor`` is one (fwhm nm, length cm) pair."""
    if fwhm <= 0:
        raise ValueError("fwhm must be positive")
    fwhm_ref, length_ref = anchor
    return length_ref * fwhm_ref / fwhm


def project_squeezing(p_peak: float, length: float, eta_assumed: float,
                      reference: PPWaveguideSpec) -> float:
    """Squeezing in dB for a longer waveguide and higher peak pump power."""
    if p_peak < 0 or length <= 0:
        raise ValueError("p_peak must be >= 0 and length > 0")
    _check_fraction("eta_assumed", eta_assumed)
    mu = reference.mu * length / reference.interaction_length
    v_minus, _ = squeezing_variances(squeezing_from_pump(mu, p_peak), eta_assumed)
    return 10.0 * math.log10(v_minus)
