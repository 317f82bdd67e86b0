"""Command-line front end.

Commands: spectrum | sweep | time-trace | fit-rabi | tiers.
Every command writes its outputs plus a JSON manifest into --output-dir
and nowhere else.  Exit codes: 0 success, 2 config/input error,
3 numerics error, 4 I/O error.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .config import build_run, load_config_file, make_manifest, write_manifest
from .correlations import stationary_correlation, two_time_correlation
from .errors import ConfigError, NumericsError
from .experiments import (SweepSpec, fit_phonon_coupling, rabi_curve,
                          run_sweep, tier_comparison, RabiCurve)
from .model import effective_pulse_area
from .propagate import default_t_end
from .spectra import (DEFAULT_BIN, DEFAULT_WINDOW, FilterSpec, IrfSpec,
                      filtered_time_trace, spectrum)
from .units import ghz_to_angular

CW_TAU_MAX_DEFAULT = 3000.0


def _fmt(x) -> str:
    return f"{x:.10g}"


class OutputSet:
    """Tracks files written by one command; removes them on abort."""

    def __init__(self, out_dir):
        self.dir = out_dir
        self.paths = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.paths.append(p)
        return p

    def names(self):
        return [os.path.basename(p) for p in self.paths]

    def cleanup(self):
        for p in self.paths:
            try:
                os.remove(p)
            except OSError:
                pass


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_spectrum_csv(path, result):
    _write_csv(path, "freq_GHz,intensity_arb",
               zip(result.freq_ghz, result.intensity))


def _spectrum_options(resolved):
    opts = resolved.spectrum_opts
    window = ghz_to_angular(opts["window_GHz"]) if opts.get("window_GHz") else DEFAULT_WINDOW
    bin_w = ghz_to_angular(opts["bin_GHz"]) if opts.get("bin_GHz") else DEFAULT_BIN
    instrument = (ghz_to_angular(opts["instrument_fwhm_GHz"])
                  if opts.get("instrument_fwhm_GHz") else None)
    return window, bin_w, instrument


def _compute_correlation(resolved, fixed_step):
    cfg = resolved.model
    if cfg.pulse.kind == "cw":
        opts = resolved.spectrum_opts
        return stationary_correlation(
            cfg, tau_max=float(opts.get("cw_tau_max_ps", CW_TAU_MAX_DEFAULT)),
            dtau=float(opts.get("cw_dtau_ps", 0.5)), fixed_step=fixed_step), None
    spec = resolved.corr_spec(default_t_end(cfg), fixed_step=fixed_step)
    return two_time_correlation(cfg, spec), spec


def cmd_spectrum(args):
    resolved = build_run(load_config_file(args.config), tier_override=args.tier)
    out = OutputSet(args.output_dir)
    t0 = time.perf_counter()
    window, bin_w, instrument = _spectrum_options(resolved)
    corr, corr_spec = _compute_correlation(resolved, args.fixed_step)
    map_step = None
    if args.time_resolved:
        if corr_spec is None:
            raise ConfigError("--time-resolved requires a pulsed drive")
        map_step = float(resolved.spectrum_opts.get("map_step_ps", 2.0))
    result = spectrum(corr, window=window, bin_width=bin_w,
                      time_resolved_step=map_step, instrument_fwhm=instrument)
    try:
        _write_spectrum_csv(out.path("spectrum.csv"), result)
        if result.map_values is not None:
            rows = ((t, f, v) for i, t in enumerate(result.map_times)
                    for f, v in zip(result.freq_ghz, result.map_values[i]))
            _write_csv(out.path("spectrum_map.csv"), "t_ps,freq_GHz,intensity", rows)
        grid_used = dict(corr.meta)
        manifest = make_manifest("spectrum", resolved, grid_used, out.names(),
                                 time.perf_counter() - t0,
                                 {"fixed_step": args.fixed_step,
                                  "time_resolved": bool(args.time_resolved),
                                  "tier_override": args.tier})
        write_manifest(out.path("manifest.json"), manifest)
    except Exception:
        out.cleanup()
        raise
    return 0


def _parse_values(text):
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3:
            raise ConfigError("range values must be start:stop:step")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        vals = [start + step * k for k in range(n + 1)]
    else:
        vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise ConfigError("no sweep values given")
    return tuple(vals)


def cmd_sweep(args):
    resolved = build_run(load_config_file(args.config), tier_override=args.tier)
    cfg = resolved.model
    out = OutputSet(args.output_dir)
    t0 = time.perf_counter()
    window, bin_w, instrument = _spectrum_options(resolved)
    values = _parse_values(args.values)
    corr_spec = resolved.corr_spec(default_t_end(cfg), fixed_step=args.fixed_step)
    spec = SweepSpec(axis=args.axis, values=values, base=cfg, corr=corr_spec,
                     window=window, bin_width=bin_w, instrument_fwhm=instrument)
    try:
        results = run_sweep(spec, jobs=args.jobs)
        combined = []
        for v, r in zip(values, results):
            _write_spectrum_csv(out.path(f"spectrum_{args.axis}_{v:g}.csv"), r)
            combined.extend((v, f, s) for f, s in zip(r.freq_ghz, r.intensity))
        _write_csv(out.path("sweep_combined.csv"),
                   "sweep_value,freq_GHz,intensity", combined)
        manifest = make_manifest(
            "sweep", resolved,
            {"axis": args.axis, "values": list(values), **_grid_meta(corr_spec)},
            out.names(), time.perf_counter() - t0,
            {"jobs": args.jobs, "fixed_step": args.fixed_step,
             "tier_override": args.tier})
        write_manifest(out.path("manifest.json"), manifest)
    except Exception:
        out.cleanup()
        raise
    return 0


def _grid_meta(corr_spec):
    return {"t_end": corr_spec.t_end, "dt_prime": corr_spec.dt_prime,
            "dtau": corr_spec.dtau, "tau_max": corr_spec.tau_max}


def cmd_time_trace(args):
    resolved = build_run(load_config_file(args.config), tier_override=args.tier)
    cfg = resolved.model
    if cfg.pulse.kind == "cw":
        raise ConfigError("time-trace requires a pulsed drive")
    out = OutputSet(args.output_dir)
    t0 = time.perf_counter()
    corr_spec = resolved.corr_spec(default_t_end(cfg), fixed_step=args.fixed_step)
    corr = two_time_correlation(cfg, corr_spec)
    filt = FilterSpec(center=ghz_to_angular(args.filter_center_ghz),
                      fwhm=ghz_to_angular(args.filter_fwhm_ghz))
    irf = None
    if not args.no_irf:
        irf = IrfSpec(fast_fwhm=args.irf_fast_ps, slow_tau=args.irf_slow_ps,
                      slow_weight=args.irf_slow_weight)
    trace = filtered_time_trace(corr, filt, irf)
    try:
        if trace.post_irf is not None:
            _write_csv(out.path("time_trace.csv"),
                       "t_ps,intensity_pre_irf,intensity_post_irf",
                       zip(trace.times, trace.pre_irf, trace.post_irf))
        else:
            _write_csv(out.path("time_trace.csv"), "t_ps,intensity_pre_irf",
                       zip(trace.times, trace.pre_irf))
        manifest = make_manifest("time-trace", resolved,
                                 {**_grid_meta(corr_spec), **trace.meta},
                                 out.names(), time.perf_counter() - t0,
                                 {"fixed_step": args.fixed_step,
                                  "tier_override": args.tier})
        write_manifest(out.path("manifest.json"), manifest)
    except Exception:
        out.cleanup()
        raise
    return 0


def _load_target_csv(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read target file: {exc}") from exc
    rows = []
    for ln in lines:
        parts = ln.split(",")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            if not rows:  # tolerate one header line
                continue
            raise ConfigError(f"unparseable target row: {ln!r}") from None
    if not rows:
        raise ConfigError("target CSV contains no data rows")
    amps = np.array([r[0] for r in rows])
    if np.any(np.diff(amps) <= 0):
        raise ConfigError("target amplitude column must be strictly increasing; "
                          "sort the rows by amplitude first")
    return amps, np.array([r[1] for r in rows])


def cmd_fit_rabi(args):
    resolved = build_run(load_config_file(args.config))
    cfg = resolved.model
    out = OutputSet(args.output_dir)
    t0 = time.perf_counter()
    amps, intens = _load_target_csv(args.target)
    target = RabiCurve(amplitudes=amps, intensities=intens)
    corr_spec = resolved.corr_spec(default_t_end(cfg), fixed_step=args.fixed_step)
    fit = fit_phonon_coupling(target, cfg, alpha_max=args.alpha_max,
                              alpha_min=args.alpha_min, corr=corr_spec,
                              jobs=args.jobs)
    best_cfg = _with_alpha(cfg, fit.params.alpha_ps2)
    overlay = rabi_curve(best_cfg, amps, corr=corr_spec, jobs=args.jobs)
    try:
        import json
        report = {
            "alpha_ps2": fit.params.alpha_ps2,
            "omega_b_THz": fit.params.omega_b / (2 * np.pi),
            "tau_cutoff_ps": fit.params.tau_cutoff_ps,
            "temperature_K": fit.params.temperature_k,
            "scale": fit.scale,
            "residual": fit.residual,
            "iterations": fit.iterations,
            "at_bound": fit.at_bound,
        }
        with open(out.path("fit_report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_csv(out.path("fit_overlay.csv"),
                   "amplitude_pi,target_intensity,fit_intensity",
                   zip(amps, intens, fit.scale * overlay.intensities))
        manifest = make_manifest("fit-rabi", resolved, _grid_meta(corr_spec),
                                 out.names(), time.perf_counter() - t0,
                                 {"alpha_max": args.alpha_max,
                                  "alpha_min": args.alpha_min,
                                  "jobs": args.jobs,
                                  "fixed_step": args.fixed_step})
        write_manifest(out.path("manifest.json"), manifest)
    except Exception:
        out.cleanup()
        raise
    return 0


def _with_alpha(cfg, alpha):
    from dataclasses import replace
    return replace(cfg, phonon=replace(cfg.phonon, alpha_ps2=alpha))


def cmd_tiers(args):
    resolved = build_run(load_config_file(args.config))
    cfg = resolved.model
    out = OutputSet(args.output_dir)
    t0 = time.perf_counter()
    window, bin_w, _ = _spectrum_options(resolved)
    values = _parse_values(args.values)
    corr_spec = resolved.corr_spec(default_t_end(cfg), fixed_step=args.fixed_step)
    comparison = tier_comparison(cfg, values, corr=corr_spec, window=window,
                                 bin_width=bin_w, jobs=args.jobs)
    try:
        import json
        metrics = {}
        for tier, data in comparison.items():
            combined = []
            for v, r in zip(values, data["spectra"]):
                combined.extend((v, f, s) for f, s in zip(r.freq_ghz, r.intensity))
            _write_csv(out.path(f"tier_{tier}_combined.csv"),
                       "sweep_value,freq_GHz,intensity", combined)
            metrics[tier] = {"asymmetry": [None if np.isnan(x) else float(x)
                                           for x in data["asymmetry"]]}
        with open(out.path("tier_metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest = make_manifest("tiers", resolved,
                                 {"values": list(values), **_grid_meta(corr_spec)},
                                 out.names(), time.perf_counter() - t0,
                                 {"jobs": args.jobs, "fixed_step": args.fixed_step})
        write_manifest(out.path("manifest.json"), manifest)
    except Exception:
        out.cleanup()
        raise
    return 0


def _add_common(sub):
    sub.add_argument("config", help="YAML config (or a manifest JSON)")
    sub.add_argument("--output-dir", default="out")
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--fixed-step", type=float, nargs="?", const=0.05,
                     default=None, metavar="PS",
                     help="fixed RK4 step for bit-reproducible runs")
    sub.add_argument("--seedless", action="store_true",
                     help="reserved flag; rejected if set (no RNG anywhere)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dynrf",
        description="Pulsed resonance-fluorescence spectra of a cavity-coupled "
                    "two-level emitter")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("spectrum", help="long-time incoherent spectrum")
    _add_common(sp)
    sp.add_argument("--tier", default=None, help="override model tier (A|B|C)")
    sp.add_argument("--time-resolved", action="store_true",
                    help="also emit the cumulative S(w, t) map")
    sp.set_defaults(func=cmd_spectrum)

    sw = subs.add_parser("sweep", help="parameter sweep of spectra")
    _add_common(sw)
    sw.add_argument("--tier", default=None)
    sw.add_argument("--axis", required=True,
                    choices=["amplitude", "laser_detuning", "cavity_detuning",
                             "pulse_width"])
    sw.add_argument("--values", required=True,
                    help="comma list or start:stop:step")
    sw.set_defaults(func=cmd_sweep)

    tt = subs.add_parser("time-trace", help="spectrally filtered time trace")
    _add_common(tt)
    tt.add_argument("--tier", default=None)
    tt.add_argument("--filter-center-GHz", dest="filter_center_ghz",
                    type=float, required=True)
    tt.add_argument("--filter-fwhm-GHz", dest="filter_fwhm_ghz",
                    type=float, default=8.0)
    tt.add_argument("--no-irf", action="store_true",
                    help="skip the detector-response convolution")
    tt.add_argument("--irf-fast-ps", type=float, default=30.0)
    tt.add_argument("--irf-slow-ps", type=float, default=350.0)
    tt.add_argument("--irf-slow-weight", type=float, default=0.1)
    tt.set_defaults(func=cmd_time_trace)

    fr = subs.add_parser("fit-rabi", help="fit the phonon coupling strength")
    _add_common(fr)
    fr.add_argument("--target", required=True,
                    help="CSV with (amplitude_pi, intensity) rows")
    fr.add_argument("--alpha-max", type=float, required=True)
    fr.add_argument("--alpha-min", type=float, default=0.0)
    fr.set_defaults(func=cmd_fit_rabi)

    tc = subs.add_parser("tiers", help="model-tier comparison on one sweep")
    _add_common(tc)
    tc.add_argument("--values", required=True)
    tc.set_defaults(func=cmd_tiers)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seedless:
        print("error [config]: --seedless is reserved; this tool uses no "
              "randomness anywhere", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error [numerics]: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
