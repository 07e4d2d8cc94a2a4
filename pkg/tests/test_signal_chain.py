import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvlac.driven_floquet import DriveParams
from nvlac.signal_chain import (CurveSource, IDENTITY_RESPONSE, LockInConfig, ModulationConfig,
                                ResponseModel, frequency_response_curve, lockin_demodulate,
                                loglog_slope, minus_3db_frequency, photocurrent_from_power,
                                reconstruct_by_integration, scan_demodulated, slope_at_zero,
                                synthesize_timeseries, volts_to_rabi)

MOD = ModulationConfig("field")
finite = dict(allow_nan=False, allow_infinity=False)


class FnSource:
    """Curve source built from a plain function of B."""

    def __init__(self, fn, drive=None):
        self.fn, self.drive = fn, drive

    def __call__(self, b, drive_on=True):
        return self.fn(np.asarray(b, dtype=float))

    def without_drive(self):
        return FnSource(self.fn)


def test_lockin_convention():
    t = MOD.times()
    w = 2 * math.pi * MOD.f_mod
    assert lockin_demodulate((t, 3 * np.sin(w * t)), MOD) == pytest.approx(3.0, abs=1e-6)
    assert abs(lockin_demodulate((t, np.full_like(t, 7.0)), MOD)) < 1e-9
    cos_cfg = LockInConfig(reference_phase=math.pi / 2)
    assert lockin_demodulate((t, 2 * np.cos(w * t)), MOD, cos_cfg) == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("k", [2, 3, 4, 7])
def test_harmonic_rejection(k):
    t = MOD.times()
    x = np.sin(2 * math.pi * k * MOD.f_mod * t + 0.3)
    assert abs(lockin_demodulate((t, x), MOD)) < 1e-6


def test_linearity_over_four_decades():
    t = MOD.times()
    base = np.sin(2 * math.pi * MOD.f_mod * t) + 0.2 * np.cos(4 * math.pi * MOD.f_mod * t)
    ref = lockin_demodulate((t, base), MOD)
    for a in (1e-2, 1e-1, 1.0, 1e1, 1e2):
        assert lockin_demodulate((t, a * base), MOD) == pytest.approx(a * ref, rel=1e-9)


def test_short_series_rejected():
    with pytest.raises(ValueError):
        ModulationConfig("field", 70.0, duration=5 / 70.0)
    t = MOD.times()[:100]
    with pytest.raises(ValueError):
        lockin_demodulate((t, np.sin(t)), MOD)
    with pytest.raises(ValueError):
        lockin_demodulate((MOD.times(), MOD.times()), MOD, LockInConfig(time_constant=1e-4))


def test_flat_curve_has_no_first_harmonic():
    t, x = synthesize_timeseries(FnSource(lambda b: 0 * b + 5.0), 0.3, MOD, ResponseModel())
    assert np.ptp(x) == 0.0 and abs(lockin_demodulate((t, x), MOD)) < 1e-12


@pytest.mark.parametrize("f_mod", [20.0, 70.0, 300.0])
def test_linear_curve_gives_slope_times_amplitude_times_response(f_mod):
    mod = ModulationConfig("field", f_mod, amplitude=0.05)
    resp = ResponseModel()
    u = lockin_demodulate(synthesize_timeseries(FnSource(lambda b: 2.5 * b), 1.0, mod, resp), mod)
    assert u == pytest.approx(2.5 * 0.05 * float(resp.factor(f_mod)), rel=1e-9)


def test_even_curve_at_zero_has_zero_first_harmonic():
    src = CurveSource()
    u = scan_demodulated(src, [0.0], "mm0")[0]
    assert abs(u) < 1e-12


def test_demodulated_lac_is_derivative_for_small_modulation():
    src = CurveSource()
    b = np.linspace(-8, 8, 161)
    mod = ModulationConfig("field", amplitude=0.05)
    u = scan_demodulated(src, b, "mm0", mod, IDENTITY_RESPONSE)
    h = 1e-4
    d = (src(b + h, False) - src(b - h, False)) / (2 * h)
    assert np.max(np.abs(u - 0.05 * d)) < 0.02 * np.max(np.abs(0.05 * d))


def test_drive_contribution_is_derivative_of_drive_change():
    src = CurveSource(DriveParams(4.1, 5.3))
    b = np.linspace(-4, 4, 81)
    mod = ModulationConfig("field", amplitude=0.02)
    diff = (scan_demodulated(src, b, "mm", mod, IDENTITY_RESPONSE)
            - scan_demodulated(src, b, "mm0", mod, IDENTITY_RESPONSE))
    h = 1e-4
    change = lambda x: src(x, True) - src(x, False)
    d = (change(b + h) - change(b - h)) / (2 * h)
    assert np.max(np.abs(diff - 0.02 * d)) < 0.02 * np.max(np.abs(0.02 * d))


def test_am_scan_without_drive_is_zero():
    src = CurveSource(DriveParams(0.0, 5.3))
    assert np.array_equal(scan_demodulated(src, [-1.0, 0.0, 2.0], "am"), np.zeros(3))


def test_am_first_harmonic_is_half_the_on_off_difference():
    src = CurveSource(DriveParams(4.1, 5.3))
    mod = ModulationConfig("rf_amplitude", amplitude=1.0)
    u = scan_demodulated(src, [0.0, 1.5], "am", mod)
    want = 0.5 * (src(np.array([0.0, 1.5]), True) - src(np.array([0.0, 1.5]), False))
    assert np.allclose(u, want, rtol=1e-9, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0, **finite), st.floats(-2, 2, **finite), st.floats(0.05, 5, **finite))
def test_round_trip_on_gaussian_dips(width, centre, depth):
    b = np.linspace(-15, 15, 6001)
    curve = lambda x: 100.0 - depth * np.exp(-0.5 * ((x - centre) / width) ** 2)
    src = FnSource(curve)
    mod = ModulationConfig("field", amplitude=1e-3)
    u = scan_demodulated(src, b, "mm0", mod, IDENTITY_RESPONSE)
    rec = reconstruct_by_integration(u, b, curve(0.0), 1e-3)
    assert np.max(np.abs(rec - curve(b)) / curve(b)) < 1e-4


def test_anchor_is_exact_and_zero_input_is_constant():
    b = np.linspace(-3, 3, 61)
    rec = reconstruct_by_integration(np.zeros_like(b), b, 142.7, 0.5)
    assert np.all(rec == 142.7)
    rec = reconstruct_by_integration(np.sin(b) + 0.1, b, 0.1 + 0.2, 0.5)
    assert rec[30] == 0.1 + 0.2
    with pytest.raises(ValueError):
        reconstruct_by_integration(np.zeros(5), np.linspace(1, 2, 5), 1.0, 0.5)


def test_round_trip_on_lac_curve_matches_modulation_smoothing():
    src = CurveSource()
    b = np.linspace(-15, 15, 1201)
    amp = 0.5
    u = scan_demodulated(src, b, "mm0", ModulationConfig("field", amplitude=amp), IDENTITY_RESPONSE)
    # first-harmonic demodulation followed by integration returns the curve
    # convolved with the kernel (2/pi) sqrt(1 - (x/a)^2) / a
    x = np.linspace(-amp, amp, 2001)[1:-1]
    kern = np.sqrt(1 - (x / amp) ** 2)
    kern /= kern.sum()
    smooth = np.array([np.sum(kern * src(bb + x, False)) for bb in b])
    rec = reconstruct_by_integration(u, b, smooth[600], amp)
    assert np.max(np.abs(rec - smooth)) < 2e-3 * np.ptp(smooth)


def test_noise_is_seeded():
    src = CurveSource()
    a = synthesize_timeseries(src, 0.5, MOD, ResponseModel(), noise_rms=0.1, seed=7)[1]
    b = synthesize_timeseries(src, 0.5, MOD, ResponseModel(), noise_rms=0.1, seed=7)[1]
    c = synthesize_timeseries(src, 0.5, MOD, ResponseModel(), noise_rms=0.1, seed=8)[1]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_slope_without_drive_is_normalized_to_one():
    r = slope_at_zero(CurveSource())
    assert r.normalized_slope == 1.0 and r.slope == r.reference_slope != 0


def test_slope_without_drive_amplitude_is_normalized_to_one():
    r = slope_at_zero(CurveSource(DriveParams(0.0, 5.3)))
    assert r.normalized_slope == 1.0


def test_response_model_shape():
    r = ResponseModel()
    f = np.geomspace(1, 1e4, 200)
    v = r.factor(f)
    assert np.all(np.diff(v) <= 0)
    assert float(r.factor(120.0)) == pytest.approx(1 / math.sqrt(2))
    assert np.all(ResponseModel("am_mod").factor(f) == 1)
    with pytest.raises(ValueError):
        ResponseModel(f_c=0)


def test_frequency_response_closure():
    r = ResponseModel()
    f = np.geomspace(5, 3000, 80)
    a = frequency_response_curve("field", f, r)
    assert np.max(np.abs(a / r.factor(f) - 1)) < 1e-6
    assert minus_3db_frequency(f, a) == pytest.approx(120, abs=2)
    assert loglog_slope(f, a, 1000) == pytest.approx(-1.5, abs=0.02)


def test_hardware_helpers():
    assert volts_to_rabi(1.0, "non_resonant") == pytest.approx(1.9)
    assert volts_to_rabi(2.0) == pytest.approx(5.6)
    assert photocurrent_from_power(1e-3) == pytest.approx(6e-4)


def test_modulation_validation():
    with pytest.raises(ValueError):
        ModulationConfig("field", 70.0, sample_rate=10 * 70.0)
    with pytest.raises(ValueError):
        ModulationConfig("rf_amplitude", 70.0, amplitude=1.5)
    with pytest.raises(ValueError):
        ModulationConfig("square", 70.0)
