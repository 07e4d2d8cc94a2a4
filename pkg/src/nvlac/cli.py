"""Command-line front end: ``nvlac <command> [--config PATH] [--out DIR] ...``.

Exit codes: 0 success, 2 configuration error (nothing is written), 3
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial

import numpy as np

from . import __version__
from .config import ConfigError, GridSpec, RunConfig
from .driven_floquet import (DriveParams, FloquetConvergenceError, TwoLevelParams,
                             floquet_quasienergies, local_minima)
from .io import OutputSet, csv_bytes, json_bytes, ppm_bytes, utc_now, write_manifest
from .lineshape import (CalibrationError, ContrastModel, StrainDistribution, calibrate_model,
                        central_feature, curve_width_and_depth, fluorescence_map,
                        orientation_dip, resolve_direction)
from .signal_chain import (CurveSource, ModulationConfig, ResponseModel, frequency_response_curve,
                           loglog_slope, minus_3db_frequency, slope_at_zero,
                           summarize_slope_curve)
from .spin_core import (SpinParams, eigensystem, build_hamiltonian, FieldVector,
                        find_anticrossings, level_sweep)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class Context:
    """Typed objects built from a config, plus the command-line options."""

    def __init__(self, cfg: RunConfig, args):
        self.cfg = cfg
        self.args = args
        s = cfg["spin"]
        self.params = SpinParams(d_gs=s["d_gs"], e_strain=s["e_strain"], a_par=s["a_par"],
                                 a_perp=s["a_perp"], p_quad=s["p_quad"], g_s=s["g_s"],
                                 g_i=s["g_i"], gamma_nv=s["gamma_nv"])
        f = cfg["field"]
        self.b_grid = GridSpec("field", f["start"], f["stop"], f["count"])
        self.direction = resolve_direction(f["direction"])
        d = cfg["drive"]
        self.drive = DriveParams(d["omega_rf"], d["f_rf"], d["phase"])
        st = cfg["strain"]
        self.dist = StrainDistribution(st["sigma_e"], st["n_nodes"])
        self.model = self._model(cfg["model"], args.model)
        self.i0 = cfg["lineshape"]["i0_ua"]
        if not self.i0 > 0:
            raise ValueError("[lineshape] i0_ua must be positive")
        m = cfg["modulation"]
        if m["samples_per_period"] < 20:
            raise ValueError("[modulation] samples_per_period must be at least 20")
        if m["periods"] < 10:
            raise ValueError("[modulation] periods must be at least 10")
        self.field_mod = self._mod("field", m["field_amplitude"])
        self.am_mod = self._mod("rf_amplitude", m["am_depth"])
        self.noise_rms = m["noise_rms"]
        if self.noise_rms < 0:
            raise ValueError("[modulation] noise_rms must be non-negative")

    def _mod(self, kind, amplitude):
        m = self.cfg["modulation"]
        f = m["f_mod"]
        return ModulationConfig(kind, f, amplitude, m["samples_per_period"] * f, m["periods"] / f)

    @staticmethod
    def _model(section, path):
        base = ContrastModel()
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    base = ContrastModel.from_dict(json.load(fh)["model"])
            except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{path}: cannot load model ({exc})") from exc
        over = {k: v for k, v in section.items() if v is not None}
        return replace(base, **over) if over else base

    def source(self, drive=None):
        return CurveSource(drive, self.direction, self.dist, self.model, self.params, self.i0)


def cmd_levels(ctx: Context, out: OutputSet):
    v = ctx.cfg["levels"]["direction"]
    try:
        direction = np.array([float(x) for x in v.split(",")])
        if direction.shape != (3,) or not np.linalg.norm(direction) > 0:
            raise ValueError
    except ValueError:
        raise ConfigError(f"[levels] direction = {v!r} must be three comma-separated numbers")
    grid = ctx.b_grid
    header = ["B_gauss"] + [f"level_{j:02d}" for j in range(9)]
    if grid.count == 1:
        warnings.warn("single-point field grid: no anti-crossing search")
        u = direction / np.linalg.norm(direction)
        es = eigensystem(build_hamiltonian(ctx.params, FieldVector(*(grid.start * u))))
        out.add("levels.csv", csv_bytes(header, [[grid.start, *es.values]]))
        out.add("anticrossings.json", json_bytes([]))
        return {"anticrossings": 0}
    diagram = level_sweep(ctx.params, direction, (grid.start, grid.stop), grid.count)
    rows = [[b, *e] for b, e in zip(diagram.b_grid, diagram.energies)]
    out.add("levels.csv", csv_bytes(header, rows))
    found = find_anticrossings(diagram, ctx.params)
    recs = [{"b_center": a.b_center, "gap": a.gap, "pair": [list(p) for p in a.pair],
             "m_i_sector": a.m_i_sector} for a in found]
    out.add("anticrossings.json", json_bytes(recs))
    return {"anticrossings": len(recs)}


def _floquet_row(b, ctx_params, drive, coupling):
    spec = floquet_quasienergies(TwoLevelParams(ctx_params.gamma_nv * b, coupling), drive)
    return [b, ctx_params.gamma_nv * b, *spec.quasienergies, spec.dressed_gap, spec.truncation_n]


def _pool_map(fn, items, workers):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def cmd_floquet(ctx: Context, out: OutputSet):
    coupling = ctx.cfg["floquet"]["coupling"]
    if coupling < 0:
        raise ConfigError("[floquet] coupling must be non-negative")
    b = ctx.b_grid.values()
    rows = _pool_map(partial(_floquet_row, ctx_params=ctx.params, drive=ctx.drive,
                             coupling=coupling), b.tolist(), ctx.args.workers)
    out.add("floquet.csv", csv_bytes(
        ["B_gauss", "delta_mhz", "quasienergy_lo_mhz", "quasienergy_hi_mhz", "gap_mhz",
         "truncation_n"], rows))
    gaps = np.array([r[4] for r in rows])
    minima = [{"b_gauss": x, "delta_mhz": ctx.params.gamma_nv * x, "gap_mhz": y}
              for x, y in local_minima(b, gaps)]
    out.add("floquet_minima.json", json_bytes(minima))
    return {"minima": len(minima)}


def cmd_lineshape(ctx: Context, out: OutputSet):
    b = ctx.b_grid.values()
    off = orientation_dip(b, ctx.direction, None, ctx.dist, ctx.model, ctx.params)
    on = orientation_dip(b, ctx.direction, ctx.drive, ctx.dist, ctx.model, ctx.params)
    rows = [[x, 1 - p, 1 - q, ctx.i0 * (1 - p), ctx.i0 * (1 - q)] for x, p, q in zip(b, off, on)]
    out.add("lineshape.csv", csv_bytes(
        ["B_gauss", "relative_off", "relative_on", "photocurrent_off_uA", "photocurrent_on_uA"],
        rows))
    hwhm, depth = curve_width_and_depth(ctx.model, ctx.dist, ctx.params, ctx.direction)
    centre, width = central_feature(b, ctx.i0 * (off - on))
    summary = {"hwhm_gauss": hwhm, "depth": depth, "central_delta_uA": centre,
               "central_half_width_gauss": width, "model": ctx.model.to_dict()}
    out.add("lineshape.json", json_bytes(summary))
    return summary


def cmd_map(ctx: Context, out: OutputSet):
    m = ctx.cfg["map"]
    if m["axis"] not in ("f_rf", "omega_rf"):
        raise ConfigError(f"[map] axis = {m['axis']!r} must be f_rf or omega_rf")
    axis = GridSpec(m["axis"], m["start"], m["stop"], m["count"])
    fixed = ctx.drive.omega_rf if m["axis"] == "f_rf" else ctx.drive.f_rf
    b = ctx.b_grid.values()
    fmap = fluorescence_map(m["axis"], axis.values(), fixed, b, ctx.direction, ctx.dist,
                            ctx.model, ctx.params, ctx.i0, workers=ctx.args.workers)
    rows = [[bj, xi, fmap.total[i, j], fmap.delta[i, j]]
            for i, xi in enumerate(fmap.axis_values) for j, bj in enumerate(fmap.b_grid)]
    out.add("map.csv", csv_bytes(["b", "x", "total_uA", "delta_uA"], rows))
    for name, z in (("total", fmap.total), ("delta", fmap.delta)):
        img, meta = ppm_bytes(z, scale=2)
        meta.update({"quantity": f"{name}_uA", "x_axis": "B_gauss", "y_axis": m["axis"],
                     "b_range": [float(b[0]), float(b[-1])],
                     "y_range": [float(fmap.axis_values[0]), float(fmap.axis_values[-1])],
                     "ramp": "linear: min dark blue, midpoint white, max dark red"})
        out.add(f"map_{name}.ppm", img)
        out.add(f"map_{name}.json", json_bytes(meta))
    i0 = int(np.argmin(np.abs(b)))
    strongest = int(np.argmax(np.abs(fmap.delta[:, i0])))
    return {"rows": len(rows), "strongest_centre_x": float(fmap.axis_values[strongest])}


def _slope_point(om, base, f_rf, mod, response, noise_rms, seed):
    drive = DriveParams(om, f_rf) if om > 0 else None
    r = slope_at_zero(base.with_drive(drive), mod, response, noise_rms=noise_rms, seed=seed)
    return [om, r.slope, r.normalized_slope]


def cmd_slope(ctx: Context, out: OutputSet):
    s = ctx.cfg["slope"]
    grid = GridSpec("omega_rf", s["omega_start"], s["omega_stop"], s["omega_count"])
    if grid.start < 0:
        raise ConfigError("[slope] omega_start must be non-negative")
    DriveParams(0.0, s["f_rf"])
    response = ResponseModel("field_mod")
    rows = _pool_map(partial(_slope_point, base=ctx.source(), f_rf=s["f_rf"],
                             mod=ctx.field_mod, response=response,
                             noise_rms=ctx.noise_rms, seed=ctx.args.seed),
                     grid.values().tolist(), ctx.args.workers)
    out.add("slope.csv", csv_bytes(["omega_rf_mhz", "slope_uA_per_G", "normalized_slope"], rows))
    omegas = np.array([r[0] for r in rows])
    ratios = np.array([r[2] for r in rows])
    summary = summarize_slope_curve(omegas, ratios) if len(rows) > 1 else {
        "zero_crossing_mhz": None, "sign_changes": 0, "extremum_mhz": float(omegas[0]),
        "extremum_ratio": float(ratios[0])}
    summary.update({"f_rf_mhz": s["f_rf"], "modulation_amplitude_gauss": ctx.field_mod.amplitude})
    out.add("slope_summary.json", json_bytes(summary))
    return summary


def cmd_calibrate(ctx: Context, out: OutputSet):
    c = ctx.cfg["calibrate"]
    model, residuals = calibrate_model(c["hwhm_g"], c["depth"], ctx.dist, ctx.params,
                                       resolve_direction(c["direction"]), c["linewidth"],
                                       ctx.model.sector_weights)
    out.add("model.json", json_bytes({"model": model.to_dict(), "sigma_e": ctx.dist.sigma_e,
                                      "direction": c["direction"]}))
    report = {"targets": {"hwhm_gauss": c["hwhm_g"], "depth": c["depth"]},
              "relative_residuals": residuals}
    out.add("calibration.json", json_bytes(report))
    return report


def cmd_response(ctx: Context, out: OutputSet):
    r = ctx.cfg["response"]
    channel = r["channel"]
    if channel not in ("field_mod", "am_mod"):
        raise ConfigError(f"[response] channel = {channel!r} must be field_mod or am_mod")
    if not r["f_start"] > 0:
        raise ConfigError("[response] f_start must be positive")
    grid = GridSpec("f_mod", r["f_start"], r["f_stop"], r["f_count"])
    f = np.geomspace(grid.start, grid.stop, grid.count) if grid.count > 1 else grid.values()
    response = ResponseModel(channel, r["f_c"], r["exponent"])
    if channel == "field_mod":
        amp = frequency_response_curve("field", f, response, ctx.source(), 1.0, ctx.field_mod)
    else:
        amp = frequency_response_curve("rf_amplitude", f, response, ctx.source(ctx.drive), 0.0,
                                       ctx.am_mod)
    model = response.factor(f)
    out.add("response.csv", csv_bytes(["f_hz", "amplitude", "model_factor"],
                                      [[a, b, c] for a, b, c in zip(f, amp, model)]))
    summary = {"channel": channel, "max_relative_deviation": float(np.max(np.abs(amp / model - 1)))}
    if channel == "field_mod" and len(f) > 2:
        try:
            summary["minus_3db_hz"] = minus_3db_frequency(f, amp)
        except ValueError:
            summary["minus_3db_hz"] = None
        hi = f >= 4 * response.f_c
        summary["loglog_slope"] = loglog_slope(f, amp, 4 * response.f_c) if hi.sum() >= 2 else None
    out.add("response.json", json_bytes(summary))
    return summary


COMMANDS = {
    "levels": cmd_levels,
    "floquet": cmd_floquet,
    "lineshape": cmd_lineshape,
    "map": cmd_map,
    "slope": cmd_slope,
    "calibrate": cmd_calibrate,
    "response": cmd_response,
}


def build_parser():
    p = argparse.ArgumentParser(prog="nvlac", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="sectioned key = value config file")
    common.add_argument("--out", metavar="DIR", default="nvlac_out", help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, default=0, help="seed for optional noise")
    common.add_argument("--model", metavar="PATH", help="model.json written by calibrate")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "levels": "level diagram along a field line and anti-crossing centres",
        "floquet": "dressed gap of the driven pair versus field",
        "lineshape": "ensemble fluorescence curve with and without drive",
        "map": "fluorescence map over field and a drive parameter",
        "slope": "normalized zero-field slope versus drive amplitude",
        "calibrate": "fit the contrast model to a width and depth",
        "response": "end-to-end amplitude versus modulation frequency",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = utc_now()
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig.defaults()
        ctx = Context(cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = OutputSet()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = COMMANDS[args.command](ctx, out)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, FloquetConvergenceError, ArithmeticError, ValueError,
            RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    outputs = out.write(args.out)
    write_manifest(args.out, args.command, cfg.text, __version__, started, outputs,
                   {"argv": sys.argv[1:] if argv is None else list(argv), "seed": args.seed,
                    "workers": args.workers})
    print(json.dumps({"command": args.command, "out": args.out,
                      "summary": json.loads(json_bytes(summary))}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
