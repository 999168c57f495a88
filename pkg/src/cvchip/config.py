"""Loading the chip/schedule/acquisition configuration document."""

from __future__ import annotations

import copy
import dataclasses
from importlib import resources
from pathlib import Path

import yaml

from .acquire import AcquisitionConfig, Chopper, DriveSchedule, Waveform
from .chip import (ChipNetlist, DetectorSpec, PhaseShifterSpec, PPWaveguideSpec,
                   calibrate_coupler, voltage_for_sr)


class ConfigError(ValueError):
    pass


def default_config_path() -> Path:
    return Path(str(resources.files("cvchip") / "data" / "default_chip.yaml"))


def load_config(path=None) -> dict:
    path = default_config_path() if path is None else Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict) or "chip" not in doc:
        raise ConfigError(f"{path}: missing 'chip' section")
    return doc


def _arm_map(section: dict, what: str) -> dict:
    out = {}
    for key, val in section.items():
        if not str(key).startswith("arm"):
            raise ConfigError(f"{what}: unexpected key {key!r}")
        out[int(str(key)[3:])] = val
    return out


def netlist_from_dict(doc: dict) -> ChipNetlist:
    c = doc["chip"] if "chip" in doc else doc
    try:
        wgs = tuple(PPWaveguideSpec(**w) for w in c["pp_waveguides"])
        tunable = {name: calibrate_coupler(spec["sr_at_zero"], spec["v_min"], spec["sr_min"],
                                           spec.get("voltage_range"))
                   for name, spec in c["tunable_couplers"].items()}
        shifters = {name: PhaseShifterSpec(**spec) for name, spec in c["phase_shifters"].items()}
        losses = c.get("losses", {})
        anchor = c.get("shg_length_anchor", {"fwhm": 0.5, "length": 2.0})
        return ChipNetlist(
            pp_waveguides=wgs,
            fixed_couplers=dict(c["fixed_couplers"]),
            tunable_couplers=tunable,
            phase_shifters=shifters,
            propagation_loss_signal=losses.get("propagation_signal_db_per_cm", 0.14),
            propagation_loss_pump=losses.get("propagation_pump_db_per_cm", 0.55),
            path_lengths=_arm_map(c.get("path_lengths", {}), "path_lengths"),
            facet_loss=losses.get("facet", 0.13),
            dc1_insertion_loss=losses.get("dc1_insertion", 0.005),
            excess_transmission=_arm_map(c.get("excess_transmission", {"arm1": 1.0, "arm2": 1.0}),
                                         "excess_transmission"),
            detector=DetectorSpec(**c.get("detector", {})),
            pump_isolation_db=c.get("pump_isolation_db", 20.0),
            shg_length_anchor=(anchor["fwhm"], anchor["length"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed chip section: {exc!r}") from exc


def waveform_from_dict(spec: dict, netlist: ChipNetlist | None = None,
                       electrode: str | None = None) -> Waveform:
    """Build a waveform; coupler drives may give a target ``sr`` instead of an amplitude."""
    spec = dict(spec)
    if "sr" in spec:
        if netlist is None or electrode not in netlist.tunable_couplers:
            raise ConfigError(f"'sr' target given for non-coupler electrode {electrode!r}")
        spec["amplitude"] = voltage_for_sr(netlist.tunable_couplers[electrode], spec.pop("sr"))
    try:
        return Waveform(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad waveform {spec}: {exc}") from exc


def schedule_from_dict(spec: dict, netlist: ChipNetlist, pump_powers=(0.0, 0.0)) -> DriveSchedule:
    electrodes = {name: waveform_from_dict(w, netlist, name)
                  for name, w in spec.get("electrodes", {}).items()}
    chopper = spec.get("chopper")
    schedule = DriveSchedule(
        electrodes=electrodes,
        pump_powers=tuple(pump_powers),
        pump_phase=waveform_from_dict(spec.get("pump_phase", {"kind": "constant"})),
        pump2_phase=float(spec.get("pump2_phase", 0.0)),
        chopper=Chopper(**chopper) if chopper else None,
    )
    schedule.validate(netlist)
    return schedule


def acquisition_from_dict(spec: dict) -> AcquisitionConfig:
    spec = dict(spec)
    try:
        for key in ("sample_rate", "variance_window", "postprocess_window", "trace_duration"):
            if key in spec:
                spec[key] = float(spec[key])  # YAML 1.1 reads "50e6" as a string
        if "n_average_traces" in spec:
            spec["n_average_traces"] = int(spec["n_average_traces"])
        if "detector_gain" in spec:
            spec["detector_gain"] = tuple(float(g) for g in spec["detector_gain"])
        return AcquisitionConfig(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad acquisition settings {spec}: {exc}") from exc


def experiment_section(doc: dict, name: str) -> dict:
    try:
        return copy.deepcopy(doc["experiments"][name])
    except KeyError:
        raise ConfigError(f"config has no experiments.{name} section") from None


def acquisition_preset(doc: dict, name: str) -> AcquisitionConfig:
    try:
        return acquisition_from_dict(doc["acquisition"][name])
    except KeyError:
        raise ConfigError(f"config has no acquisition preset {name!r}") from None


def experiment_netlist(doc: dict, name: str, netlist: ChipNetlist | None = None) -> ChipNetlist:
    """Chip netlist with any experiment-level transmission factor folded into the arms."""
    netlist = netlist_from_dict(doc) if netlist is None else netlist
    factor = experiment_section(doc, name).get("interference_transmission", 1.0)
    try:
        factor = float(factor)
    except (TypeError, ValueError):
        raise ConfigError(f"experiments.{name}.interference_transmission must be a number") from None
    if not 0.0 < factor <= 1.0:
        raise ConfigError(f"experiments.{name}.interference_transmission must lie in (0, 1]")
    if factor == 1.0:
        return netlist
    excess = {arm: t * factor for arm, t in netlist.excess_transmission.items()}
    return dataclasses.replace(netlist, excess_transmission=excess)
