"""``hbn-odmr`` command line: config-driven simulations and fits to CSV."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io
from .config import load_config, packaged_config, parse_range
from .errors import OdmrError
from .fitting import FreqFieldData, contrast_ratio_table, fit_eq2, fit_lorentzians
from .lac import contrast_vs_field, find_lac, overlap_scan, pl_vs_field
from .photodynamics import PopulationState, cw_odmr, evolve, pulsed_odmr, rabi_trace
from .spectra import Spectrum, cw_spectrum, frequency_vs_field_scan
from .spin_model import MU_B_GHZ_PER_G, FieldPoint, solve

CONFIG_ENV = "TRIPLET_ODMR_CONFIG"


def _range_arg(text):
    try:
        return parse_range(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config(args):
    path = args.config or os.environ.get(CONFIG_ENV) or packaged_config("replication")
    cfg = load_config(path)
    print(f"# config: {path}", file=sys.stderr)
    for line in cfg.echo():
        print(f"# {line}", file=sys.stderr)
    return cfg


def _field_value(args, cfg):
    if args.b is None:
        return cfg.values["scan.field_gauss"]
    if len(args.b) != 1:
        raise OdmrError("this command takes a single field value for --b")
    return float(args.b[0])


def _grid(value, cfg, key):
    return value if value is not None else parse_range(cfg.values[key])


def _theta(args, cfg):
    return cfg.values["scan.theta_deg"] if args.theta is None else args.theta[0]


def cmd_spectrum(args):
    cfg = _config(args)
    fld = FieldPoint(_field_value(args, cfg), _theta(args, cfg), cfg.values["scan.phi_deg"])
    freqs = _grid(args.f, cfg, "scan.f_GHz")
    if args.model == "lines":
        spec = cw_spectrum(cfg.gs, cfg.es, fld, freqs, cfg.lineshape)
    else:
        spec = cw_odmr(cfg.gs, cfg.es, fld, freqs, cfg.rates, cfg.lineshape.gs_fwhm, cfg.lineshape.es_fwhm)
    io.write_csv(args.out, ("freq_GHz", "contrast"), zip(spec.freqs, spec.contrast))


def cmd_scan(args):
    cfg = _config(args)
    rows = frequency_vs_field_scan(cfg.system(args.system), _grid(args.b, cfg, "scan.b_gauss"), _theta(args, cfg), cfg.values["scan.phi_deg"])
    io.write_csv(args.out, ("B_gauss", "branch", "freq_GHz"), rows)


def cmd_lac(args):
    cfg = _config(args)
    sys_ = cfg.system(args.system)
    pair = tuple(p.strip() for p in args.pair.split(","))
    res = find_lac(sys_, _theta(args, cfg), pair, cfg.values["scan.phi_deg"])
    io.write_report(
        args.out,
        [
            ("system", args.system),
            ("theta_deg", float(_theta(args, cfg))),
            ("branch_pair", ",".join(res.branch_pair)),
            ("B_lac_gauss", res.B_lac),
            ("gap_MHz", res.gap),
            ("closed_form_gauss", sys_.D / (sys_.g * MU_B_GHZ_PER_G)),
        ],
    )


def cmd_mixing(args):
    cfg = _config(args)
    B = _grid(args.b, cfg, "scan.b_gauss")
    thetas = args.theta if args.theta is not None else cfg.thetas
    phi = cfg.values["scan.phi_deg"]
    if args.observable == "overlaps":
        rows = []
        for th in thetas:
            curve = overlap_scan(cfg.system(args.system), B, th, phi)
            for k, b in enumerate(curve.B):
                for j, level in enumerate(curve.levels):
                    rows.append((b, th, level, *curve.overlaps[k, j]))
        io.write_csv(args.out, ("B_gauss", "theta_deg", "level", "alpha2", "beta2", "gamma2"), rows)
    elif args.observable == "contrast":
        v = cfg.values
        rows = contrast_vs_field(
            cfg.gs, cfg.es, cfg.rates, thetas, B, v["mixing.probe"],
            (v["mixing.reference_gauss"], v["mixing.reference_theta_deg"]), phi, v["mixing.use_nuclei"], args.jobs,
        )
        io.write_csv(args.out, ("B_gauss", "theta_deg", "contrast_norm"), rows)
    else:
        rows = []
        for th in thetas:
            pl = pl_vs_field(cfg.gs, cfg.es, cfg.rates, B, th, phi, cfg.values["mixing.use_nuclei"])
            rows += [(b, th, p) for b, p in zip(B, pl)]
        io.write_csv(args.out, ("B_gauss", "theta_deg", "pl_arb"), rows)


def cmd_dynamics(args):
    cfg = _config(args)
    fld = FieldPoint(_field_value(args, cfg), _theta(args, cfg), cfg.values["scan.phi_deg"])
    gs_sol, es_sol = solve(cfg.gs, fld), solve(cfg.es, fld)
    seq = cfg.protocol.sequence(args.freq)
    t, pl, _ = evolve(seq, PopulationState.thermal(len(gs_sol)), gs_sol, es_sol, cfg.rates, cfg.protocol.dt)
    io.write_csv(args.out, ("t_ns", "pl_arb"), zip(t, pl))


def cmd_rabi(args):
    cfg = _config(args)
    t = _grid(args.t, cfg, "rabi.t_ns")
    rabi = cfg.protocol.rabi if args.rabi is None else args.rabi
    decay = cfg.values["rabi.decay_ns"] or None
    io.write_csv(args.out, ("t_ns", "pl_arb"), zip(t, rabi_trace(rabi, t, decay)))


def cmd_pulsed(args):
    cfg = _config(args)
    fld = FieldPoint(_field_value(args, cfg), _theta(args, cfg), cfg.values["scan.phi_deg"])
    spec = pulsed_odmr(cfg.gs, cfg.es, fld, _grid(args.f, cfg, "scan.f_GHz"), cfg.rates, cfg.protocol)
    io.write_csv(args.out, ("freq_GHz", "contrast"), zip(spec.freqs, spec.contrast))


def cmd_fit_eq2(args):
    ds = io.ingest_csv(args.data, "freq-field")
    branch = ds.column("branch") if "branch" in ds.header else None
    sigma = ds.column("sigma_GHz") if "sigma_GHz" in ds.header else None
    if sigma is not None and np.isnan(sigma).any():
        sigma = None if np.isnan(sigma).all() else np.where(np.isnan(sigma), 1.0, sigma)
    res = fit_eq2(FreqFieldData(ds.column("B_gauss"), ds.column("freq_GHz"), branch, sigma))
    rows = [(k, res.params[k], res.stderr[k]) for k in ("D", "E", "g")]
    io.write_csv(args.out, ("name", "value", "stderr"), rows)
    report = [(f"{k}", v) for k, v in res.params.items()] + [(f"{k}_stderr", v) for k, v in res.stderr.items()]
    report += [("residual_rms_GHz", res.residual_rms), ("iterations", res.iterations), ("converged", str(res.converged).lower())]
    io.write_report(args.report, report)


def cmd_fit_peaks(args):
    ds = io.ingest_csv(args.data, "spectrum")
    model, res = fit_lorentzians(Spectrum(ds.column("freq_GHz"), ds.column("contrast")), args.n)
    io.write_csv(args.out, ("center_GHz", "amplitude", "fwhm_MHz"), [(p.center, p.amplitude, p.fwhm) for p in model.peaks])
    report = [("baseline", model.baseline), ("n_peaks", len(model.peaks)), ("residual_rms", res.residual_rms),
              ("iterations", res.iterations), ("converged", str(res.converged).lower())]
    if args.field is not None:
        (row,) = contrast_ratio_table([(args.field, model)], manifolds=tuple(args.manifolds.split(",")))
        report += [("ratio_es", row[1]), ("ratio_gs", row[2])]
    io.write_report(args.report, report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hbn-odmr", description="Spin-1 defect ODMR simulation and fitting.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_, system=False, field=False, freq=False, theta=False):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help=f"config file (falls back to ${CONFIG_ENV}, then the bundled replication config)")
        p.add_argument("--out", default="-", help="output path ('-' for stdout)")
        p.add_argument("--jobs", type=int, default=1, help="worker count for parallel sweeps")
        if system:
            p.add_argument("--system", choices=("gs", "es"), default="es")
        if field:
            p.add_argument("--b", type=_range_arg, help="field in gauss, start:step:stop or a single value")
        if theta:
            p.add_argument("--theta", type=_float_list, help="polar angle(s) in degrees")
        if freq:
            p.add_argument("--f", type=_range_arg, help="microwave grid in GHz, start:step:stop")
        return p

    p = add("spectrum", cmd_spectrum, "synthetic cw-ODMR spectrum", field=True, freq=True, theta=True)
    p.add_argument("--model", choices=("lines", "rates"), default="lines", help="Lorentzian line sum or rate-equation steady state")
    add("scan", cmd_scan, "resonance frequencies versus field", system=True, field=True, theta=True)
    p = add("lac", cmd_lac, "locate a level anti-crossing", system=True, theta=True)
    p.add_argument("--pair", default="0,-1", help="branch pair, e.g. 0,-1")
    p = add("mixing", cmd_mixing, "spin mixing, contrast or PL versus field", system=True, field=True, theta=True)
    p.add_argument("--observable", choices=("overlaps", "contrast", "pl"), default="overlaps")
    p = add("dynamics", cmd_dynamics, "PL trace of the pulsed protocol", field=True, theta=True)
    p.add_argument("--freq", type=float, help="MW frequency of the dark pulse in GHz (omit for no pulse)")
    p = add("rabi", cmd_rabi, "ideal Rabi oscillation trace")
    p.add_argument("--t", type=_range_arg, help="pulse lengths in ns, start:step:stop")
    p.add_argument("--rabi", type=float, help="Rabi frequency in MHz")
    add("pulsed-odmr", cmd_pulsed, "pulsed-ODMR spectrum", field=True, freq=True, theta=True)
    for name, func, kind in (("fit-eq2", cmd_fit_eq2, "B_gauss,freq_GHz[,branch][,sigma_GHz]"), ("fit-peaks", cmd_fit_peaks, "freq_GHz,contrast")):
        p = sub.add_parser(name, help=f"fit a {kind} CSV")
        p.set_defaults(func=func)
        p.add_argument("data", help=f"input CSV with header {kind}")
        p.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
        p.add_argument("--report", default=None, help="key = value report path (default: stderr)")
    p.add_argument("--n", type=int, default=1, help="number of Lorentzians")
    p.add_argument("--field", type=float, help="field (gauss) used to assign branches for amplitude ratios")
    p.add_argument("--manifolds", default="es,gs", help="manifolds to report ratios for")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be ≥ 1")
    try:
        args.func(args)
    except (OdmrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


run_command = main

if __name__ == "__main__":
    sys.exit(main())
