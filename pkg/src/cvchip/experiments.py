"""End-to-end synthetic experiments: SHG tuning, squeezing sweeps, entanglement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import acquire as aq
from . import analysis as an
from . import chip as chipmod
from .chip import ChipNetlist
from .fitting import FitError


def child_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """Independent per-task streams derived from one master seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


# --- SHG -------------------------------------------------------------------

@dataclass
class SHGCurve:
    waveguide: int
    wavelengths: np.ndarray
    efficiency: np.ndarray
    fit: an.SHGFit


def shg_sweep(netlist: ChipNetlist, wavelength_min: float, wavelength_max: float,
              n_points: int = 41, relative_noise: float = 0.0, seed=0) -> list[SHGCurve]:
    if not wavelength_max > wavelength_min:
        raise ValueError("wavelength range has zero or negative width")
    if n_points < 4:
        raise ValueError("need at least 4 wavelengths")
    lam = np.linspace(wavelength_min, wavelength_max, n_points)
    curves = []
    for k, (wg, ss) in enumerate(zip(netlist.pp_waveguides, child_seeds(seed, 2)), start=1):
        eff = chipmod.shg_efficiency(lam, wg.norm_conversion_efficiency,
                                     wg.phase_match_wavelength, wg.shg_fwhm)
        if relative_noise > 0:
            rng = np.random.default_rng(ss)
            eff = eff + relative_noise * wg.norm_conversion_efficiency * rng.standard_normal(lam.size)
        fit = an.fit_shg_curve(np.column_stack([lam, eff]), netlist.shg_length_anchor)
        curves.append(SHGCurve(k, lam, eff, fit))
    return curves


# --- squeezing ---------------------------------------------------------------

@dataclass
class ScanResult:
    power: float
    waveguide: int
    detector: str
    shot_noise: aq.ShotNoiseCalibration
    variance: aq.VarianceTrace  # normalized, post-processed
    fit: an.VarianceScanFit
    raw: aq.TimeTrace | None = None


def processed_variance(trace: aq.TimeTrace, acq: aq.AcquisitionConfig,
                       schedule: aq.DriveSchedule, sn) -> aq.VarianceTrace:
    """Windowed variance in shot-noise units, restricted to the post-processing slots."""
    vt = aq.windowed_variance(trace, acq)
    if sn is not None:
        vt = vt.normalized(sn)
    if schedule.modulation is not None:
        vt = vt.select(aq.postprocess_mask(vt, schedule.modulation, acq.postprocess_window))
    if vt.pump_on is not None and not np.all(vt.pump_on == vt.pump_on[0]):
        vt = vt.select(vt.pump_on)
    return vt


def squeeze_scan(netlist: ChipNetlist, schedule: aq.DriveSchedule, acq: aq.AcquisitionConfig,
                 power: float, waveguide: int = 1, seed=0, keep_raw: bool = False) -> ScanResult:
    """One LO-scanned noise measurement with a single pump into ``waveguide``."""
    if waveguide not in (1, 2):
        raise ValueError("waveguide must be 1 or 2")
    if power < 0:
        raise ValueError("pump power must be non-negative")
    det = f"HD{waveguide}"
    powers = (power, 0.0) if waveguide == 1 else (0.0, power)
    sched = schedule.with_pumps(powers)
    sn_seed, run_seed = child_seeds(seed, 2)
    sn = aq.measure_shot_noise(netlist, sched, acq, sn_seed)[det]
    traces = aq.run_experiment(netlist, sched, acq, run_seed)
    vt = processed_variance(traces[det], acq, sched, sn)
    fit = an.fit_variance_scan(vt)
    return ScanResult(power, waveguide, det, sn, vt, fit, traces[det] if keep_raw else None)


@dataclass
class SweepResult:
    scans: list[ScanResult]
    power_fit: an.PowerSweepFit | None
    power_fit_error: str | None

    def points(self) -> np.ndarray:
        return np.array([[s.power, s.fit.v_minus, s.fit.v_plus] for s in self.scans])

    def sigma_db(self) -> np.ndarray:
        return np.array([[s.fit.v_minus_db_se, s.fit.v_plus_db_se] for s in self.scans])


def squeeze_sweep(netlist: ChipNetlist, schedule: aq.DriveSchedule, acq: aq.AcquisitionConfig,
                  powers, waveguide: int = 1, seed=0, keep_raw: bool = False) -> SweepResult:
    powers = [float(p) for p in powers]
    if not powers:
        raise ValueError("empty power list")
    scans = [squeeze_scan(netlist, schedule, acq, p, waveguide, ss, keep_raw)
             for p, ss in zip(powers, child_seeds(seed, len(powers)))]
    result = SweepResult(scans, None, None)
    try:
        result.power_fit = an.fit_power_sweep(result.points(), result.sigma_db())
    except FitError as exc:
        result.power_fit_error = str(exc)
    return result


# --- entanglement -----------------------------------------------------------

@dataclass
class EntangleResult:
    shot_noise: dict
    in_phase: dict  # detector -> VarianceTrace
    in_phase_fits: dict  # detector -> VarianceScanFit
    out_of_phase: dict  # detector -> VarianceTrace
    combined: dict  # "plus"/"minus" -> VarianceTrace
    positions: an.QuadraturePositions
    report: an.InseparabilityReport

    def out_of_phase_levels_db(self) -> dict:
        return {k: float(10 * np.log10(np.mean(v.variance))) for k, v in self.out_of_phase.items()}


def entangle_run(netlist: ChipNetlist, schedule: aq.DriveSchedule, acq: aq.AcquisitionConfig,
                 pump_power: float, seed=0) -> EntangleResult:
    """Separable (pumps in phase) and entangled (pumps in antiphase) runs plus the criterion.

    Quadrature positions are taken from fits of the in-phase traces and then
    applied to the summed/subtracted photocurrents of the antiphase run.
    """
    if pump_power <= 0:
        raise ValueError("entanglement run needs both pumps on")
    sn_seed, in_seed, out_seed = child_seeds(seed, 3)
    base = schedule.with_pumps((pump_power, pump_power))
    sn = aq.measure_shot_noise(netlist, base, acq, sn_seed)

    sched_in = base.with_pumps(pump2_phase=schedule.pump2_phase)
    tr_in = aq.run_experiment(netlist, sched_in, acq, in_seed)
    vt_in = {d: processed_variance(tr_in[d], acq, sched_in, sn[d]) for d in tr_in}
    fits_in = {d: an.fit_variance_scan(vt) for d, vt in vt_in.items()}

    sched_out = base.with_pumps(pump2_phase=schedule.pump2_phase + math.pi)
    tr_out = aq.run_experiment(netlist, sched_out, acq, out_seed)
    vt_out = {d: processed_variance(tr_out[d], acq, sched_out, sn[d]) for d in tr_out}
    combined = {}
    for label, sign in (("plus", 1), ("minus", -1)):
        ct = an.combine_photocurrents(tr_out["HD1"], tr_out["HD2"], sn["HD1"], sn["HD2"], sign)
        combined[label] = processed_variance(ct, acq, sched_out, None)

    positions = an.find_quadrature_positions(fits_in["HD1"], fits_in["HD2"], combined["plus"])
    report = an.inseparability((combined["plus"], combined["minus"]), positions)
    return EntangleResult(sn, vt_in, fits_in, vt_out, combined, positions, report)


def blocked_entangle_run(netlist, schedule, acq, seed=0) -> an.InseparabilityReport:
    """Criterion evaluated with the pumps off, using the schedule's nominal LO phases."""
    sn_seed, run_seed = child_seeds(seed, 2)
    base = schedule.with_pumps((0.0, 0.0))
    sn = aq.measure_shot_noise(netlist, base, acq, sn_seed)
    tr = aq.run_experiment(netlist, base, acq, run_seed)
    combined = {}
    for label, sign in (("plus", 1), ("minus", -1)):
        ct = an.combine_photocurrents(tr["HD1"], tr["HD2"], sn["HD1"], sn["HD2"], sign)
        combined[label] = processed_variance(ct, acq, base, None)
    positions = nominal_positions(netlist, schedule, combined["plus"])
    return an.inseparability((combined["plus"], combined["minus"]), positions)


def nominal_positions(netlist: ChipNetlist, schedule: aq.DriveSchedule,
                      vt: aq.VarianceTrace, n_points: int = 4) -> an.QuadraturePositions:
    """Quadrature positions from the programmed LO ramps, taking x as the squeezed axis."""
    fits = []
    for arm in (1, 2):
        name = chipmod.SHIFTER_OF_ARM[arm]
        w = schedule.electrodes.get(name)
        if w is None or w.kind != "ramp":
            raise ValueError(f"{name} is not driven by a ramp")
        v_pi = netlist.phase_shifters[name].v_pi
        rate = 2 * math.pi * w.amplitude * w.frequency / v_pi
        theta0 = math.pi * (w.offset - w.amplitude + 2 * w.amplitude * w.frequency * w.delay) / v_pi
        # scan-model phase is the LO phase shifted by pi/2 (minimum at theta = 0)
        fits.append(an.VarianceScanFit(1.0, 1.0, rate, float(np.mod(theta0 + math.pi / 2, math.pi)), {}))
    return an.find_quadrature_positions(fits[0], fits[1], vt, n_points)
