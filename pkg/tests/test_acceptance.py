"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantities before asserting.  Tolerances are the stated ones; none is
widened to make a result pass.
"""

import csv
import json
import math
import time

import numpy as np
import pytest

from nvlac.cli import main
from nvlac.driven_floquet import (DriveParams, TwoLevelParams, dressed_gap_vs_field,
                                  floquet_quasienergies, local_minima, monodromy_quasienergies)
from nvlac.lineshape import (ContrastModel, StrainDistribution, central_feature,
                             curve_width_and_depth, orientation_dip, resolve_direction)
from nvlac.signal_chain import (CurveSource, IDENTITY_RESPONSE, ModulationConfig, ResponseModel,
                                frequency_response_curve, lockin_demodulate, loglog_slope,
                                minus_3db_frequency, reconstruct_by_integration, scan_demodulated,
                                slope_vs_drive, summarize_slope_curve)
from nvlac.spin_core import SpinParams, find_anticrossings, flip_flop_floor, level_sweep


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}")
        assert ok, f"criterion {number}: {detail}"
    return emit


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_01_crossing_geometry(report):
    t0 = time.perf_counter()
    p = SpinParams()
    ac = find_anticrossings(level_sweep(p, (0, 0, 1), (-5, 5), 1001), p)
    dt = time.perf_counter() - t0
    got = {a.m_i_sector: a.b_center for a in ac}
    want = {-1: -2.16 / 2.8, 0: 0.0, 1: 2.16 / 2.8}
    err = max(abs(got.get(m, math.inf) - want[m]) for m in want)
    ok = err <= 1e-3 and dt < 1.0
    report(1, "crossing geometry", ok,
           f"centres {sorted(got.values())} G, max error {err:.2e} G, {dt:.2f} s")


def test_02_zero_field_gap_law(report):
    t0 = time.perf_counter()
    errs = {}
    for e in (0.1, 1.0, 5.0, 10.0):
        p = SpinParams(e_strain=e)
        ac = {a.m_i_sector: a for a in find_anticrossings(level_sweep(p, (0, 0, 1), (-1, 1), 201), p)}
        errs[e] = ac[0].gap - 2 * e
    dt = time.perf_counter() - t0
    ok = all(abs(v) <= 1e-6 for v in errs.values()) and dt < 1.0
    detail = ", ".join(f"E={e:g}: {v:+.2e}" for e, v in errs.items())
    report(2, "m_I=0 gap equals 2E", ok, f"gap - 2E [MHz] {detail}; {dt:.2f} s")


def test_03_flip_flop_floor(report):
    t0 = time.perf_counter()
    floor = flip_flop_floor(SpinParams(), np.linspace(0, 20, 201))
    dt = time.perf_counter() - t0
    ok = abs(floor - 4.32) <= 0.05 and dt < 5.0
    report(3, "flip-flop floor", ok, f"{floor:.4f} MHz, {dt:.2f} s")


def test_04_floquet_oracle_equivalence(report):
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst, converged = 0.0, 0
    for _ in range(200):
        sys = TwoLevelParams(rng.uniform(-20, 20), rng.uniform(0, 20))
        drive = DriveParams(rng.uniform(0, 7), rng.uniform(0.3, 6.7))
        a = floquet_quasienergies(sys, drive)
        b = monodromy_quasienergies(sys, drive)
        converged += a.converged
        worst = max(worst, float(np.max(np.abs(np.sort(a.quasienergies)
                                              - np.sort(b.quasienergies)))))
    dt = time.perf_counter() - t0
    ok = converged == 200 and worst <= 1e-9 and dt < 60
    report(4, "Floquet oracle equivalence", ok,
           f"max |dq| {worst:.2e} MHz over {converged} converged instances, {dt:.1f} s")


def test_05_multiphoton_structure(report):
    t0 = time.perf_counter()
    p = SpinParams()
    b = np.linspace(0, 4.5, 901)
    g = dressed_gap_vs_field(p, DriveParams(4.9, 5.0), 5.0, b)
    mins = [p.gamma_nv * x for x, _ in local_minima(b, [y for _, y in g])]
    dt = time.perf_counter() - t0
    near = {n: min(mins, key=lambda d: abs(d - 5.0 * n)) for n in (1, 2)}
    rel = {n: abs(near[n] - 5.0 * n) / (5.0 * n) for n in near}
    ok = all(r <= 0.15 for r in rel.values()) and dt < 10
    report(5, "multi-photon minima", ok,
           f"minima at |delta| {[round(m, 3) for m in mins]} MHz; "
           f"n=1 off {rel[1]:.1%}, n=2 off {rel[2]:.1%}; {dt:.1f} s")


def test_06_calibration_closure(report, tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "cal"
    cfg = tmp_path / "cal.ini"
    cfg.write_text("[calibrate]\nhwhm_g = 2.9\ndepth = 0.0093\n")
    code = main(["calibrate", "--config", str(cfg), "--out", str(out)])
    model = ContrastModel.from_dict(json.loads((out / "model.json").read_text())["model"])
    w, d = curve_width_and_depth(model)
    dt = time.perf_counter() - t0
    ok = code == 0 and abs(w - 2.9) <= 0.1 and abs(d - 0.0093) <= 0.0004 and dt < 30
    report(6, "calibration closure", ok, f"HWHM {w:.4f} G, depth {100 * d:.4f} %, {dt:.1f} s")


def test_07_map_structure(report, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "map.ini"
    cfg.write_text("[field]\nstart = -5\nstop = 5\ncount = 201\n"
                   "[drive]\nomega_rf = 4.9\n"
                   "[map]\naxis = f_rf\nstart = 0.3\nstop = 6.7\ncount = 33\n")
    out = tmp_path / "map"
    code = main(["map", "--config", str(cfg), "--out", str(out), "--workers", "4"])
    _, data = read_csv(out / "map.csv")
    dt = time.perf_counter() - t0
    b = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    total = data[:, 2].reshape(len(xs), len(b))
    delta = data[:, 3].reshape(len(xs), len(b))
    baseline = total - delta
    # (a) the no-drive dip sits at B = 0 with the calibrated width
    base = baseline[0]
    dip_centre = float(b[np.argmin(base)])
    hwhm, _ = curve_width_and_depth(ContrastModel())
    a_ok = abs(dip_centre) < 0.1 and base.max() - base.min() > 0
    # (b) strongest row has a central feature much narrower than the dip
    i0 = int(np.argmin(np.abs(b)))
    row = int(np.argmax(np.abs(delta[:, i0])))
    centre, width = central_feature(b, delta[row])
    depth_lac = base.max() - base.min()
    b_ok = abs(centre) > 0.05 * depth_lac and width < 0.5 * hwhm
    # (c) the drive effect at B = 0 peaks for f_rf in 4-6 MHz
    f_best = float(xs[row])
    c_ok = 4.0 <= f_best <= 6.0
    ok = code == 0 and a_ok and b_ok and c_ok and dt < 300
    report(7, "map structure", ok,
           f"(a) dip at {dip_centre:+.3f} G; (b) central delta {centre:+.4f} uA "
           f"(LAC depth {depth_lac:.3f} uA), half-width {width:.3f} G vs HWHM {hwhm:.2f} G; "
           f"(c) strongest at f_rf {f_best:.2f} MHz; {dt:.1f} s")


def test_08_slope_curve_shape(report):
    t0 = time.perf_counter()
    omegas = np.linspace(0, 8, 33)
    ratios = slope_vs_drive(CurveSource(), omegas, 5.3)
    s = summarize_slope_curve(omegas, ratios)
    dt = time.perf_counter() - t0
    first = ratios[0] == 1.0
    one_cross = s["sign_changes"] == 1
    if s["zero_crossing_mhz"] is not None:
        before = ratios[omegas <= s["zero_crossing_mhz"]]
        falling = bool(np.all(np.diff(before) < 0))
    else:
        falling = False
    big = abs(s["extremum_ratio"]) > 2
    ok = first and one_cross and falling and big and dt < 120
    report(8, "slope curve shape", ok,
           f"ratio(0)={ratios[0]:.3f}, sign changes {s['sign_changes']}, "
           f"zero crossing {s['zero_crossing_mhz']}, monotone fall to crossing {falling}, "
           f"extremum {s['extremum_ratio']:+.3f} at {s['extremum_mhz']:.2f} MHz "
           f"(reference -2.3 at 4.2 MHz); {dt:.1f} s")


def test_09_signal_chain_identities(report, tmp_path):
    t0 = time.perf_counter()
    mod = ModulationConfig("field")
    t = mod.times()
    w = 2 * math.pi * mod.f_mod
    conv = abs(lockin_demodulate((t, 3 * np.sin(w * t)), mod) - 3.0)
    harm = max(abs(lockin_demodulate((t, np.sin(k * w * t + 0.4)), mod)) for k in (2, 3, 4, 5))
    # derivative then integrate on a smooth dip
    b = np.linspace(-12, 12, 4801)
    curve = lambda x: 143.0 - 1.3 * np.exp(-0.5 * (x / 1.7) ** 2)

    class Src:
        drive = None

        def __call__(self, x, drive_on=True):
            return curve(np.asarray(x))

        def without_drive(self):
            return self

    small = ModulationConfig("field", amplitude=1e-3)
    u = scan_demodulated(Src(), b, "mm0", small, IDENTITY_RESPONSE)
    rec = reconstruct_by_integration(u, b, float(curve(0.0)), 1e-3)
    trip = float(np.max(np.abs(rec - curve(b)) / curve(b)))
    anchored = rec[2400] == float(curve(0.0))
    cfg = tmp_path / "m.ini"
    cfg.write_text("[field]\ncount = 41\n[map]\ncount = 6\n")
    main(["map", "--config", str(cfg), "--out", str(tmp_path / "s"), "--workers", "1"])
    main(["map", "--config", str(cfg), "--out", str(tmp_path / "p"), "--workers", "4"])
    same = (tmp_path / "s" / "map.csv").read_bytes() == (tmp_path / "p" / "map.csv").read_bytes()
    dt = time.perf_counter() - t0
    ok = conv <= 1e-6 and harm < 1e-6 and trip <= 1e-4 and anchored and same and dt < 60
    report(9, "signal-chain identities", ok,
           f"A sin -> A error {conv:.1e}, harmonic leak {harm:.1e}, round trip {trip:.1e}, "
           f"anchor exact {anchored}, parallel CSV identical {same}; {dt:.1f} s")


def test_10_response_closure(report):
    t0 = time.perf_counter()
    r = ResponseModel("field_mod")
    f = np.geomspace(5, 4000, 120)
    a = frequency_response_curve("field", f, r)
    closure = float(np.max(np.abs(a / r.factor(f) - 1)))
    f3 = minus_3db_frequency(f, a)
    slope = loglog_slope(f, a, 1000)
    am = frequency_response_curve("rf_amplitude", [100.0, 1000.0], ResponseModel("am_mod"))
    flat = abs(am[1] / am[0] - 1)
    dt = time.perf_counter() - t0
    ok = closure <= 0.01 and abs(f3 - 120) <= 5 and abs(slope + 1.5) <= 0.05 and flat <= 0.01 \
        and dt < 60
    report(10, "response model closure", ok,
           f"closure {closure:.1e}, -3 dB at {f3:.1f} Hz, asymptote {slope:.3f}, "
           f"AM 1 kHz/100 Hz - 1 = {flat:.1e}; {dt:.1f} s")


def test_11_orientation_dependence(report):
    t0 = time.perf_counter()
    b = np.linspace(-10, 10, 801)
    dist, model = StrainDistribution(), ContrastModel()
    rows, ok = [], True
    for om in (4.1, 6.2):
        drive = DriveParams(om, 5.3)
        feats = {}
        for name in ("100", "110", "111"):
            u = resolve_direction(name)
            change = orientation_dip(b, u, None, dist, model) - orientation_dip(b, u, drive, dist,
                                                                                 model)
            feats[name] = central_feature(b, change)
        deepest = max(feats, key=lambda k: abs(feats[k][0]))
        narrowest = min(feats, key=lambda k: feats[k][1])
        ok &= deepest == "100" and narrowest == "100"
        rows.append(f"Omega {om}: " + ", ".join(
            f"<{k}> depth {abs(v[0]):.2e} width {v[1]:.2f} G" for k, v in feats.items())
            + f" -> deepest <{deepest}>, narrowest <{narrowest}>")
    dt = time.perf_counter() - t0
    report(11, "orientation dependence", ok and dt < 300, "; ".join(rows) + f"; {dt:.1f} s")
