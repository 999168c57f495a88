"""Drive waveforms, synthetic homodyne acquisition and variance estimation.

Homodyne samples are drawn i.i.d. at the acquisition rate from the Gaussian
state produced by the chip at each instant: the detection side-band filter
is treated as flat in band, which leaves windowed variances unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import chip as chipmod
from .chip import ChipNetlist, ControlSetting

SHOT_NOISE_SE_DB = 0.025
SHOT_NOISE_WINDOW = 0.4e-3
SHOT_NOISE_N_WINDOWS = 5

# slow controls are snapped to this grid before the circuit is compiled
VOLTAGE_QUANTUM = 1e-4
PHASE_QUANTUM = 1e-4

DB_PER_NEPER = 10.0 / math.log(10.0)

WAVEFORM_KINDS = ("ramp", "square", "sine", "constant")


@dataclass(frozen=True)
class Waveform:
    """Periodic drive; ``ramp`` is a sawtooth from ``-A`` to ``+A`` each period."""

    kind: str
    amplitude: float = 0.0
    frequency: float = 0.0
    offset: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        if self.kind not in WAVEFORM_KINDS:
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.frequency < 0:
            raise ValueError(f"frequency must be non-negative, got {self.frequency}")
        if self.kind == "square" and self.offset != 0.0:
            raise ValueError("square drives are zero-mean; offset must be 0")
        if self.kind in ("ramp", "square", "sine") and self.frequency == 0:
            raise ValueError(f"{self.kind} waveform needs a positive frequency")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency if self.frequency > 0 else math.inf

    def extrema(self) -> tuple[float, float]:
        if self.kind == "constant":
            v = self.amplitude + self.offset
            return v, v
        a = abs(self.amplitude)
        return self.offset - a, self.offset + a


def waveform_eval(w: Waveform, t):
    t = np.asarray(t, dtype=float)
    if w.kind == "constant":
        out = np.full_like(t, w.amplitude + w.offset)
    else:
        frac = np.mod(w.frequency * (t + w.delay), 1.0)
        if w.kind == "square":
            out = np.where(frac < 0.5, w.amplitude, -w.amplitude)
        elif w.kind == "ramp":
            out = w.offset + w.amplitude * (2.0 * frac - 1.0)
        else:
            out = w.offset + w.amplitude * np.sin(2.0 * np.pi * frac)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Chopper:
    """Optical chopper on both pumps; each period starts open (the trigger edge)."""

    period: float
    blocked_fraction: float = 0.5

    def __post_init__(self):
        if self.period <= 0 or not 0.0 <= self.blocked_fraction <= 1.0:
            raise ValueError("chopper needs period > 0 and blocked_fraction in [0, 1]")

    @property
    def open_duration(self) -> float:
        return self.period * (1.0 - self.blocked_fraction)

    def is_open(self, t):
        return np.mod(np.asarray(t, dtype=float), self.period) < self.open_duration


@dataclass(frozen=True)
class DriveSchedule:
    electrodes: Mapping[str, Waveform]
    pump_powers: tuple[float, float] = (0.0, 0.0)
    pump_phase: Waveform = field(default_factory=lambda: Waveform("constant"))
    pump2_phase: float = 0.0
    chopper: Chopper | None = None

    def validate(self, netlist: ChipNetlist) -> None:
        for name, w in self.electrodes.items():
            if name not in netlist.electrodes:
                raise ValueError(f"schedule references unknown electrode {name!r}")
            lo, hi = w.extrema()
            rng = netlist.electrode_range(name)
            if max(abs(lo), abs(hi)) > rng + 1e-12:
                raise ValueError(f"{name} waveform exceeds +/-{rng} V")
        if min(self.pump_powers) < 0:
            raise ValueError("pump powers must be non-negative")

    @property
    def modulation(self) -> Waveform | None:
        """Square wave on DC1 that sets the post-processing grid, if any."""
        w = self.electrodes.get("DC1")
        return w if w is not None and w.kind == "square" else None

    def with_pumps(self, powers=None, pump2_phase=None) -> "DriveSchedule":
        return replace(self,
                       pump_powers=tuple(powers) if powers is not None else self.pump_powers,
                       pump2_phase=self.pump2_phase if pump2_phase is None else pump2_phase)


@dataclass(frozen=True)
class AcquisitionConfig:
    sample_rate: float
    variance_window: float
    n_average_traces: int
    postprocess_window: float
    trace_duration: float
    detector_gain: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if self.variance_window * self.sample_rate < 2:
            raise ValueError("variance window must hold at least two samples")
        if self.n_average_traces < 1 or self.trace_duration <= 0:
            raise ValueError("need at least one trace of positive duration")
        if min(self.detector_gain) <= 0:
            raise ValueError("detector gains must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.variance_window * self.sample_rate))

    @property
    def n_samples(self) -> int:
        return int(round(self.trace_duration * self.sample_rate))

    def check_against(self, schedule: DriveSchedule) -> None:
        mod = schedule.modulation
        if mod is not None and self.postprocess_window > mod.period / 2:
            raise ValueError("post-processing window longer than a half modulation period")


@dataclass
class TimeTrace:
    """Homodyne photocurrent record; ``samples`` is ``(n_traces, n_samples)``."""

    t: np.ndarray
    samples: np.ndarray
    sample_rate: float
    pump_on: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[1] != self.t.size:
            raise ValueError("samples and timestamps differ in length")
        if self.pump_on is not None:
            self.pump_on = np.asarray(self.pump_on, dtype=bool)

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.t.size

    def scaled(self, factor: float) -> "TimeTrace":
        return replace(self, samples=self.samples * factor)


@dataclass
class VarianceTrace:
    t: np.ndarray
    variance: np.ndarray
    se: np.ndarray
    window: float = 0.0
    pump_on: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.variance = np.asarray(self.variance, dtype=float)
        self.se = np.asarray(self.se, dtype=float)
        if not (self.t.shape == self.variance.shape == self.se.shape):
            raise ValueError("t, variance and se must have equal shapes")
        if np.any(self.variance < 0):
            raise ValueError("negative variance")

    def __len__(self) -> int:
        return self.t.size

    def select(self, mask) -> "VarianceTrace":
        mask = np.asarray(mask, dtype=bool)
        on = None if self.pump_on is None else self.pump_on[mask]
        return VarianceTrace(self.t[mask], self.variance[mask], self.se[mask],
                             self.window, on, self.name)

    def normalized(self, level) -> "VarianceTrace":
        level = getattr(level, "level", level)
        return replace(self, variance=self.variance / level, se=self.se / level)

    def to_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.variance)


@dataclass(frozen=True)
class ShotNoiseCalibration:
    level: float
    se: float
    window_levels: tuple[float, ...] = ()

    @property
    def se_db(self) -> float:
        return DB_PER_NEPER * self.se / self.level


def combine_db_uncertainty(*terms_db: float) -> float:
    """Independent dB uncertainties added in quadrature."""
    return float(math.sqrt(sum(x * x for x in terms_db)))


def to_db(v, sn=1.0):
    sn = getattr(sn, "level", sn)
    v = np.asarray(v, dtype=float)
    if sn <= 0 or np.any(v <= 0):
        raise ValueError("variance and shot-noise level must be positive")
    out = 10.0 * np.log10(v / sn)
    return float(out) if out.ndim == 0 else out


# --- experiment engine -------------------------------------------------------

def control_tracks(netlist: ChipNetlist, schedule: DriveSchedule, t) -> dict[str, np.ndarray]:
    """Electrode voltages, pump phases, LO phases and pump gating versus time."""
    t = np.asarray(t, dtype=float)
    tracks = {name: waveform_eval(w, t) for name, w in schedule.electrodes.items()}
    for name in netlist.electrodes:
        tracks.setdefault(name, np.zeros_like(t))
    tracks["pump1_phase"] = waveform_eval(schedule.pump_phase, t)
    tracks["pump2_phase"] = np.full_like(t, schedule.pump2_phase)
    tracks["gate"] = (schedule.chopper.is_open(t) if schedule.chopper is not None
                      else np.ones(t.shape, dtype=bool))
    for arm in chipmod.ARMS:
        shifter = chipmod.SHIFTER_OF_ARM[arm]
        tracks[f"lo{arm}_phase"] = chipmod.phase_from_voltage(netlist.phase_shifters[shifter],
                                                              tracks[shifter])
    return tracks


def _moments_per_sample(netlist, schedule, tracks):
    """Mean (n, 4) and covariance (n, 4, 4) of both modes before LO projection."""
    gate = tracks["gate"]
    keys = np.column_stack([
        np.round(tracks["DC1"] / VOLTAGE_QUANTUM),
        np.round(tracks["DC4"] / VOLTAGE_QUANTUM),
        np.round(tracks["DC5"] / VOLTAGE_QUANTUM),
        np.round(tracks["pump1_phase"] / PHASE_QUANTUM),
        np.round(tracks["pump2_phase"] / PHASE_QUANTUM),
        gate.astype(float),
    ])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    means = np.empty((len(uniq), 4))
    covs = np.empty((len(uniq), 4, 4))
    for k, row in enumerate(uniq):
        on = bool(row[5])
        setting = ControlSetting(
            voltages={"DC1": row[0] * VOLTAGE_QUANTUM, "DC4": row[1] * VOLTAGE_QUANTUM,
                      "DC5": row[2] * VOLTAGE_QUANTUM},
            pump_powers=schedule.pump_powers if on else (0.0, 0.0),
            pump_phases=(row[3] * PHASE_QUANTUM, row[4] * PHASE_QUANTUM),
        )
        state = chipmod.output_state(netlist, setting)
        means[k], covs[k] = state.mean, state.cov
    return means[inverse], covs[inverse]


def run_experiment(netlist: ChipNetlist, schedule: DriveSchedule, acq: AcquisitionConfig,
                   seed, t_start: float = 0.0) -> dict[str, TimeTrace]:
    """Synthesize ``acq.n_average_traces`` triggered records for HD1 and HD2.

    Every record starts at the trigger time ``t_start`` (chopper opening by
    default), so records share the same drive timing and differ only in
    their noise.  Pump light is absent while the chopper blocks.
    """
    schedule.validate(netlist)
    acq.check_against(schedule)
    n = acq.n_samples
    if n < 1:
        raise ValueError("acquisition yields no samples")
    t = t_start + np.arange(n) / acq.sample_rate
    tracks = control_tracks(netlist, schedule, t)
    mean, cov = _moments_per_sample(netlist, schedule, tracks)

    v1 = np.stack([np.cos(tracks["lo1_phase"]), np.sin(tracks["lo1_phase"])], axis=-1)
    v2 = np.stack([np.cos(tracks["lo2_phase"]), np.sin(tracks["lo2_phase"])], axis=-1)
    var1 = np.einsum("ni,nij,nj->n", v1, cov[:, 0:2, 0:2], v1)
    var2 = np.einsum("ni,nij,nj->n", v2, cov[:, 2:4, 2:4], v2)
    c12 = np.einsum("ni,nij,nj->n", v1, cov[:, 0:2, 2:4], v2)
    m1 = np.einsum("ni,ni->n", v1, mean[:, 0:2])
    m2 = np.einsum("ni,ni->n", v2, mean[:, 2:4])
    sd1 = np.sqrt(var1)
    a21 = c12 / sd1
    sd2 = np.sqrt(np.clip(var2 - a21 ** 2, 0.0, None))

    rng = np.random.default_rng(seed)
    x1 = np.empty((acq.n_average_traces, n))
    x2 = np.empty((acq.n_average_traces, n))
    for k in range(acq.n_average_traces):
        z = rng.standard_normal((2, n))
        x1[k] = m1 + sd1 * z[0]
        x2[k] = m2 + a21 * z[0] + sd2 * z[1]
    g1, g2 = (math.sqrt(g) for g in acq.detector_gain)
    gate = tracks["gate"]
    return {
        "HD1": TimeTrace(t, g1 * x1, acq.sample_rate, gate, "HD1"),
        "HD2": TimeTrace(t, g2 * x2, acq.sample_rate, gate, "HD2"),
    }


def windowed_variance(trace: TimeTrace, acq: AcquisitionConfig | float) -> VarianceTrace:
    """Unbiased per-window variances averaged over the trace records.

    ``se`` is the across-record standard error; with a single record it
    falls back to the Gaussian estimator value ``v * sqrt(2 / (w - 1))``.
    """
    window = acq.variance_window if isinstance(acq, AcquisitionConfig) else float(acq)
    w = int(round(window * trace.sample_rate))
    if len(trace) == 0:
        raise ValueError("empty trace")
    if w < 2 or len(trace) < w:
        raise ValueError(f"trace of {len(trace)} samples shorter than a {w}-sample window")
    n_win = len(trace) // w
    blocks = trace.samples[:, :n_win * w].reshape(trace.n_traces, n_win, w)
    per_trace = blocks.var(axis=2, ddof=1)
    var = per_trace.mean(axis=0)
    if trace.n_traces > 1:
        se = per_trace.std(axis=0, ddof=1) / math.sqrt(trace.n_traces)
    else:
        se = var * math.sqrt(2.0 / (w - 1))
    starts = trace.t[:n_win * w:w]
    t_center = starts + 0.5 * (w - 1) / trace.sample_rate
    on = None
    if trace.pump_on is not None:
        on = trace.pump_on[:n_win * w].reshape(n_win, w).all(axis=1)
    return VarianceTrace(t_center, var, se, w / trace.sample_rate, on, trace.name)


def postprocess_mask(vt: VarianceTrace, modulation: Waveform, width: float) -> np.ndarray:
    """Windows lying entirely inside ``width``-long slots centred on each square-wave half."""
    half = modulation.period / 2.0
    if width > half:
        raise ValueError("post-processing window exceeds a half modulation period")
    half_w = 0.5 * vt.window
    # position of each variance window inside its half period
    phase = np.mod(vt.t + modulation.delay, half)
    lo = 0.5 * (half - width)
    return (phase - half_w >= lo - 1e-15) & (phase + half_w <= lo + width + 1e-15)


def calibrate_shot_noise(trace: TimeTrace, window: float = SHOT_NOISE_WINDOW,
                         n_windows: int = SHOT_NOISE_N_WINDOWS) -> ShotNoiseCalibration:
    """Shot-noise level from ``n_windows`` pump-blocked windows of ``window`` seconds."""
    w = int(round(window * trace.sample_rate))
    blocked = (np.ones(len(trace), dtype=bool) if trace.pump_on is None else ~trace.pump_on)
    edges = np.diff(np.concatenate([[0], blocked.astype(np.int8), [0]]))
    runs = zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1))
    slots = [s0 + k * w for s0, s1 in runs for k in range((s1 - s0) // w)]
    levels = [float(np.var(row[s0:s0 + w], ddof=1)) for row in trace.samples for s0 in slots]
    levels = levels[:n_windows]
    if len(levels) < n_windows:
        raise ValueError(f"only {len(levels)} blocked windows of {window} s; need {n_windows}")
    arr = np.array(levels)
    return ShotNoiseCalibration(float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(n_windows)),
                                tuple(levels))


def shot_noise_acquisition(acq: AcquisitionConfig, window: float = SHOT_NOISE_WINDOW,
                           n_windows: int = SHOT_NOISE_N_WINDOWS) -> AcquisitionConfig:
    """Single-record acquisition just long enough for the shot-noise protocol."""
    return replace(acq, n_average_traces=1, trace_duration=window * n_windows)


def measure_shot_noise(netlist: ChipNetlist, schedule: DriveSchedule, acq: AcquisitionConfig,
                       seed) -> dict[str, ShotNoiseCalibration]:
    """Acquire during the chopper's blocked phase and calibrate both detectors."""
    if schedule.chopper is None:
        raise ValueError("shot-noise calibration needs a chopper in the schedule")
    sn_acq = shot_noise_acquisition(acq)
    blocked_for = schedule.chopper.period - schedule.chopper.open_duration
    if blocked_for < sn_acq.trace_duration:
        raise ValueError("chopper blocked phase shorter than the shot-noise protocol")
    traces = run_experiment(netlist, schedule, sn_acq, seed,
                            t_start=schedule.chopper.open_duration)
    return {name: calibrate_shot_noise(tr) for name, tr in traces.items()}
