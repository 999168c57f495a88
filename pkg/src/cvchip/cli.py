"""Command-line runner: ``cvchip {shg-sweep,squeeze-sweep,entangle-run,fit}``.

Every command writes into one flat output directory and finishes with a
``manifest.json`` recording the config, experiment, seed and the sha256 of
each emitted file.  Nothing time-dependent is written, so rerunning with the
same manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import chip as chipmod
from . import config as cfg
from . import experiments as ex
from . import io as cio
from .acquire import to_db
from .fitting import FitError


class CLIError(Exception):
    """Raised for usage problems; reported as JSON like any other failure."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


class _Run:
    """Collects emitted files for the manifest."""

    def __init__(self, out: str, experiment: str, seed, config_path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.experiment = experiment
        self.seed = seed
        self.config_path = config_path
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def manifest(self, extra: dict | None = None) -> Path:
        doc = {
            "tool": "cvchip",
            "version": __version__,
            "experiment": self.experiment,
            "seed": self.seed,
            "config": str(self.config_path) if self.config_path else "default",
            "output_dir": str(self.out),
            "files": {p.name: cio.sha256_file(p) for p in self.files},
        }
        if self.config_path:
            doc["config_sha256"] = cio.sha256_file(self.config_path)
        if extra:
            doc["parameters"] = extra
        return cio.write_json(self.out / "manifest.json", doc)


def _tag(power: float) -> str:
    return f"{power:g}".replace(".", "p")


# --- commands --------------------------------------------------------------

def cmd_shg_sweep(args) -> dict:
    doc = cfg.load_config(args.config)
    net = cfg.netlist_from_dict(doc)
    sec = doc.get("experiments", {}).get("shg", {})
    lo = args.lambda_min if args.lambda_min is not None else sec.get("wavelength_min")
    hi = args.lambda_max if args.lambda_max is not None else sec.get("wavelength_max")
    n = args.n_points if args.n_points is not None else sec.get("n_points", 41)
    if lo is None or hi is None:
        raise CLIError("wavelength range not given on the command line or in the config")
    noise = args.noise if args.noise is not None else sec.get("relative_noise", 0.0)
    curves = ex.shg_sweep(net, float(lo), float(hi), int(n), float(noise), args.seed)

    run = _Run(args.out, "shg-sweep", args.seed, args.config)
    summary = {}
    for c in curves:
        cio.write_shg_csv(run.path(f"shg_wg{c.waveguide}.csv"), c.wavelengths, c.efficiency)
        cio.write_json(run.path(f"shg_wg{c.waveguide}_fit.json"), c.fit.as_dict())
        summary[f"wg{c.waveguide}"] = c.fit.as_dict()
        print(f"waveguide {c.waveguide}: eta0 {c.fit.eta0:.2f} %/W  lambda0 {c.fit.lambda0:.4f} nm"
              f"  FWHM {c.fit.fwhm:.4f} nm  L {c.fit.interaction_length:.3f} cm")
    run.manifest({"wavelength_min": lo, "wavelength_max": hi, "n_points": n,
                  "relative_noise": noise})
    return summary


def cmd_squeeze_sweep(args) -> dict:
    doc = cfg.load_config(args.config)
    net = cfg.experiment_netlist(doc, "squeeze")
    sec = cfg.experiment_section(doc, "squeeze")
    acq = cfg.acquisition_preset(doc, sec.get("acquisition", "single_squeezer"))
    schedule = cfg.schedule_from_dict(sec["schedule"], net)
    powers = args.powers if args.powers is not None else sec.get("powers", [])
    waveguide = args.waveguide if args.waveguide is not None else sec.get("waveguide", 1)
    if len(powers) == 0:
        raise ValueError("empty power list")
    sweep = ex.squeeze_sweep(net, schedule, acq, powers, waveguide, args.seed,
                             keep_raw=args.raw_traces > 0)

    run = _Run(args.out, "squeeze-sweep", args.seed, args.config)
    scans = []
    for s in sweep.scans:
        tag = _tag(s.power)
        cio.write_variance_csv(run.path(f"scan_{tag}mW_variance.csv"), s.variance)
        if s.raw is not None:
            cio.write_trace_csv(run.path(f"scan_{tag}mW_{s.detector}_trace.csv"), s.raw,
                                max_traces=args.raw_traces)
        fit = s.fit.as_dict()
        fit.update(power_mw=s.power, detector=s.detector,
                   shot_noise={"level": s.shot_noise.level, "se": s.shot_noise.se,
                               "se_db": s.shot_noise.se_db})
        cio.write_json(run.path(f"scan_{tag}mW_fit.json"), fit)
        scans.append(fit)
        print(f"P = {s.power:7.2f} mW  V- {s.fit.v_minus_db:+.3f} ± {s.fit.v_minus_db_se:.3f} dB"
              f"  V+ {s.fit.v_plus_db:+.3f} ± {s.fit.v_plus_db_se:.3f} dB")
    cio.write_power_csv(run.path("power_sweep.csv"), sweep.points(), sweep.sigma_db())
    if sweep.power_fit is not None:
        pf = sweep.power_fit.as_dict()
        print(f"mu = {sweep.power_fit.mu:.5f} ± {sweep.power_fit.mu_se:.5f} mW^-1/2"
              f"  eta = {sweep.power_fit.eta:.4f} ± {sweep.power_fit.eta_se:.4f}")
    else:
        pf = {"model": "power_sweep", "declined": True, "error": sweep.power_fit_error}
        print(f"power-sweep fit declined: {sweep.power_fit_error}")
    cio.write_json(run.path("power_fit.json"), pf)
    run.manifest({"powers_mw": [float(p) for p in powers], "waveguide": waveguide,
                  "raw_traces": args.raw_traces})
    return {"scans": scans, "power_fit": pf}


def cmd_entangle_run(args) -> dict:
    doc = cfg.load_config(args.config)
    net = cfg.experiment_netlist(doc, "entangle")
    sec = cfg.experiment_section(doc, "entangle")
    acq = cfg.acquisition_preset(doc, sec.get("acquisition", "two_squeezer"))
    schedule = cfg.schedule_from_dict(sec["schedule"], net)
    power = args.pump_power if args.pump_power is not None else sec.get("pump_power")
    run = _Run(args.out, "entangle-run", args.seed, args.config)

    if args.pumps_off:
        report = ex.blocked_entangle_run(net, schedule, acq, args.seed)
        out = {"pumps": "off", "report": report.as_dict()}
    else:
        if power is None or float(power) <= 0:
            raise ValueError("entanglement run needs both pumps on (pump_power > 0)")
        res = ex.entangle_run(net, schedule, acq, float(power), args.seed)
        for d, vt in res.in_phase.items():
            cio.write_variance_csv(run.path(f"inphase_{d}_variance.csv"), vt)
        for d, vt in res.out_of_phase.items():
            cio.write_variance_csv(run.path(f"outofphase_{d}_variance.csv"), vt)
        for label, vt in res.combined.items():
            cio.write_variance_csv(run.path(f"combined_{label}_variance.csv"), vt)
        fits = {d: f.as_dict() for d, f in res.in_phase_fits.items()}
        cio.write_json(run.path("inphase_fits.json"), fits)
        report = res.report
        predicted = {}
        for d, f in res.in_phase_fits.items():
            if f.identifiable and f.v_minus < 1 < f.v_plus:
                r, eta = an.invert_squeezing_pair(f.v_minus, f.v_plus)
                predicted[d] = float(to_db(eta * np.cosh(2 * r) + 1 - eta))
        out = {"pump_power_mw": float(power), "report": report.as_dict(),
               "out_of_phase_levels_db": res.out_of_phase_levels_db(),
               "out_of_phase_predicted_db": predicted,
               "quadrature_positions": {"t_squeezed": res.positions.t_squeezed,
                                        "t_antisqueezed": res.positions.t_antisqueezed}}
    cio.write_json(run.path("report.json"), out)
    print(f"I = {report.I:.4f} ± {report.I_se:.4f}  "
          f"({report.significance:+.1f} SE below the separability bound)")
    run.manifest({"pump_power_mw": None if args.pumps_off else float(power),
                  "pumps_off": args.pumps_off})
    return out


def cmd_fit(args) -> dict:
    if args.model == "scan":
        fit = an.fit_variance_scan(cio.read_variance_csv(args.input))
    elif args.model == "power":
        points, sigma = cio.read_power_csv(args.input)
        fit = an.fit_power_sweep(points, sigma)
    else:
        anchor = cfg.netlist_from_dict(cfg.load_config(args.config)).shg_length_anchor
        fit = an.fit_shg_curve(cio.read_shg_csv(args.input), anchor)
    result = fit.as_dict()
    result["input"] = str(args.input)
    if args.out:
        run = _Run(args.out, f"fit-{args.model}", None, args.config)
        cio.write_json(run.path(f"fit_{args.model}.json"), result)
        run.manifest({"model": args.model, "input": str(args.input),
                      "input_sha256": cio.sha256_file(args.input)})
    print(json.dumps(cio.jsonable(result), indent=2, sort_keys=True))
    return result


def cmd_budget(args) -> dict:
    net = cfg.netlist_from_dict(cfg.load_config(args.config))
    out = {}
    for arm in chipmod.ARMS:
        b = chipmod.efficiency_budget(net, arm)
        print(f"arm {arm}")
        print(b.table())
        out[f"arm{arm}"] = {"factors": b.factors, "total": b.total}
    return out


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cvchip", description="Simulated CV squeezing/entanglement chip runs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True, out_required=True):
        sp.add_argument("--config", default=None, help="YAML config (default: bundled chip)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=out_required, help="output directory")

    sp = sub.add_parser("shg-sweep", help="SHG tuning curves and sinc^2 fits")
    common(sp)
    sp.add_argument("--lambda-min", type=float)
    sp.add_argument("--lambda-max", type=float)
    sp.add_argument("--n-points", type=int)
    sp.add_argument("--noise", type=float, help="relative noise added to the samples")
    sp.set_defaults(func=cmd_shg_sweep)

    sp = sub.add_parser("squeeze-sweep", help="LO-scanned noise versus pump power")
    common(sp)
    sp.add_argument("--powers", type=float, nargs="*", help="pump powers in mW")
    sp.add_argument("--waveguide", type=int, choices=(1, 2))
    sp.add_argument("--raw-traces", type=int, default=0, metavar="N",
                    help="also write the first N raw traces per power")
    sp.set_defaults(func=cmd_squeeze_sweep)

    sp = sub.add_parser("entangle-run", help="two-squeezer entanglement and inseparability")
    common(sp)
    sp.add_argument("--pump-power", type=float, help="per-waveguide pump power in mW")
    sp.add_argument("--pumps-off", action="store_true", help="vacuum reference run")
    sp.set_defaults(func=cmd_entangle_run)

    sp = sub.add_parser("fit", help="fit a CSV written by this tool or by hand")
    common(sp, seed=False, out_required=False)
    sp.add_argument("model", choices=("scan", "power", "shg"))
    sp.add_argument("input", help="CSV file")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("budget", help="print the per-arm efficiency budget")
    sp.add_argument("--config", default=None)
    sp.set_defaults(func=cmd_budget)
    return p


def _fail(kind: str, message: str, code: int, **extra) -> int:
    doc = {"error": kind, "message": message}
    doc.update(extra)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except CLIError as exc:
        return _fail("usage", str(exc), 2)
    except cio.CSVSchemaError as exc:
        print(json.dumps(exc.as_dict(), sort_keys=True), file=sys.stderr)
        return 3
    except cfg.ConfigError as exc:
        return _fail("config", str(exc), 3)
    except FitError as exc:
        return _fail("fit", str(exc), 4)
    except (ValueError, IndexError) as exc:
        return _fail("invalid_input", str(exc), 3)
    except OSError as exc:
        return _fail("io", str(exc), 5, path=exc.filename)
    return 0


if __name__ == "__main__":
    sys.exit(main())
