"""Virtual modulation and lock-in detection of the photocurrent.

The instrument modulates either the bias field (sinusoidally, amplitude in
gauss) or the RF amplitude (sinusoidal AM envelope), samples the resulting
photocurrent, and demodulates it synchronously.  A slow-response transfer
factor of the NV ensemble scales the modulated part of the signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .driven_floquet import DriveParams
from .lineshape import (DEFAULT_I0_UA, ContrastModel, StrainDistribution, orientation_dip,
                        resolve_direction)
from .spin_core import SpinParams

PHOTODIODE_A_PER_W = 0.6
COIL_MHZ_PER_V = {"resonant": 2.8, "non_resonant": 1.9}


def volts_to_rabi(volts, coil="resonant"):
    """Drive amplitude (MHz) for a peak-to-peak coil voltage."""
    return COIL_MHZ_PER_V[coil] * volts


def photocurrent_from_power(watts):
    """Photodiode current (A) for an optical power (W)."""
    return PHOTODIODE_A_PER_W * watts


@dataclass(frozen=True)
class ModulationConfig:
    """Modulation waveform and sampling.

    ``amplitude`` is in gauss for ``kind="field"`` and is the AM depth in
    [0, 1] for ``kind="rf_amplitude"``.  When ``sample_rate`` is an integer
    multiple of ``f_mod`` the series holds an exact number of samples per
    period and demodulation is exact for low harmonics.
    """

    kind: str = "field"
    f_mod: float = 70.0
    amplitude: float | None = None
    sample_rate: float | None = None
    duration: float | None = None

    def __post_init__(self):
        if self.kind not in ("field", "rf_amplitude"):
            raise ValueError("kind must be 'field' or 'rf_amplitude'")
        if not self.f_mod > 0:
            raise ValueError("f_mod must be positive")
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", 0.5 if self.kind == "field" else 1.0)
        if self.sample_rate is None:
            object.__setattr__(self, "sample_rate", 64.0 * self.f_mod)
        if self.duration is None:
            object.__setattr__(self, "duration", 10.0 / self.f_mod)
        if self.kind == "rf_amplitude" and not 0 <= self.amplitude <= 1:
            raise ValueError("AM depth must lie in [0, 1]")
        if self.sample_rate < 20 * self.f_mod * (1 - 1e-12):
            raise ValueError("sample_rate must be at least 20 * f_mod")
        if self.duration < 10 / self.f_mod * (1 - 1e-12):
            raise ValueError("duration must cover at least 10 modulation periods")

    def with_frequency(self, f_mod):
        ratio = self.sample_rate / self.f_mod
        periods = self.duration * self.f_mod
        return ModulationConfig(self.kind, f_mod, self.amplitude, ratio * f_mod, periods / f_mod)

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))

    def times(self):
        return np.arange(self.n_samples) / self.sample_rate


@dataclass(frozen=True)
class LockInConfig:
    """Synchronous detector: reference ``sin(2 pi f_mod t + reference_phase)``.

    With ``reference_phase = pi / 2`` an input ``A cos(2 pi f_mod t)`` yields A.
    ``time_constant`` (s) sets the averaging window, rounded up to whole
    periods; ``None`` averages over every complete period of the series.
    """

    reference_phase: float = 0.0
    time_constant: float | None = None


@dataclass(frozen=True)
class ResponseModel:
    """Amplitude transfer factor of the ensemble for a modulation channel."""

    channel: str = "field_mod"
    f_c: float = 120.0
    exponent: float = 1.5

    def __post_init__(self):
        if self.channel not in ("field_mod", "am_mod"):
            raise ValueError("channel must be 'field_mod' or 'am_mod'")
        if not self.f_c > 0:
            raise ValueError("f_c must be positive")

    def factor(self, f):
        f = np.asarray(f, dtype=float)
        if self.channel == "am_mod":
            return np.ones_like(f)
        return (1.0 + (f / self.f_c) ** (2 * self.exponent)) ** -0.5


IDENTITY_RESPONSE = ResponseModel("am_mod")


@dataclass(frozen=True)
class SlopeResult:
    slope: float
    normalized_slope: float
    reference_slope: float


class CurveSource:
    """Photocurrent (uA) versus field magnitude, with and without drive."""

    def __init__(self, drive=None, direction="100", dist=None, model=None, params=None,
                 i0=DEFAULT_I0_UA):
        self.drive = drive
        self.direction = resolve_direction(direction)
        self.dist = dist or StrainDistribution()
        self.model = model or ContrastModel()
        self.params = params or SpinParams()
        self.i0 = float(i0)

    def __call__(self, b, drive_on=True):
        drive = self.drive if drive_on else None
        dip = orientation_dip(np.asarray(b, dtype=float), self.direction, drive,
                              self.dist, self.model, self.params)
        return self.i0 * (1.0 - dip)

    def without_drive(self):
        return CurveSource(None, self.direction, self.dist, self.model, self.params, self.i0)

    def with_drive(self, drive):
        return CurveSource(drive, self.direction, self.dist, self.model, self.params, self.i0)


def _whole_period_samples(mod):
    per = mod.sample_rate / mod.f_mod
    n_per = int(math.floor(mod.duration * mod.f_mod + 1e-9))
    return n_per, int(round(n_per * per))


def synthesize_timeseries(source, b0, mod: ModulationConfig, response: ResponseModel,
                          noise_rms=0.0, seed=None):
    """Sampled photocurrent under modulation.

    ``b0`` may be a scalar or a 1-D array of bias fields; the returned
    current then has one row per bias.  The modulated part (everything but
    the mean over complete periods) is scaled by ``response.factor(f_mod)``.

    Returns
    -------
    t : ndarray
        Sample times, s.
    current : ndarray
        Photocurrent, uA, shape ``b0.shape + t.shape``.
    """
    b0 = np.asarray(b0, dtype=float)
    t = mod.times()
    theta = 2 * math.pi * mod.f_mod * t
    s = np.sin(theta)
    per = mod.sample_rate / mod.f_mod
    periodic = abs(per - round(per)) < 1e-9
    # a periodic waveform only needs one period of curve evaluations
    n_eval = int(round(per)) if periodic else len(t)
    s_eval = s[:n_eval]
    if mod.kind == "field":
        raw = source(b0[..., None] + mod.amplitude * s_eval, drive_on=True)
    else:
        on = source(b0, drive_on=True)[..., None]
        off = source(b0, drive_on=False)[..., None]
        env = 1.0 - mod.amplitude * (1.0 - s_eval) / 2.0
        raw = off + env * (on - off)
    if periodic:
        reps = -(-len(t) // n_eval)
        raw = np.tile(raw, reps)[..., : len(t)]
        dc = raw[..., :n_eval].mean(axis=-1, keepdims=True)
    else:
        _, m = _whole_period_samples(mod)
        dc = raw[..., : max(m, 1)].mean(axis=-1, keepdims=True)
    current = dc + float(response.factor(mod.f_mod)) * (raw - dc)
    if noise_rms:
        rng = np.random.default_rng(seed)
        current = current + noise_rms * rng.standard_normal(current.shape)
    return t, current


def lockin_demodulate(series, mod: ModulationConfig, cfg: LockInConfig | None = None):
    """In-phase first-harmonic amplitude (``A sin(ref)`` returns ``A``).

    ``series`` is ``(t, current)``; the last axis of ``current`` is time.
    The product with the reference is averaged over a whole number of
    modulation periods taken from the end of the record.
    """
    cfg = cfg or LockInConfig()
    t, x = series
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    n_per, m = _whole_period_samples(mod)
    if n_per < 10 or m > x.shape[-1]:
        raise ValueError("series must span at least 10 modulation periods")
    if cfg.time_constant is not None:
        if cfg.time_constant < 3 / mod.f_mod:
            raise ValueError("time_constant must be at least 3 / f_mod")
        want = math.ceil(cfg.time_constant * mod.f_mod - 1e-9)
        if want < n_per:
            n_per = want
            m = int(round(n_per * mod.sample_rate / mod.f_mod))
    ref = np.sin(2 * math.pi * mod.f_mod * t[-m:] + cfg.reference_phase)
    return 2.0 * np.mean(x[..., -m:] * ref, axis=-1)


def scan_demodulated(source, b_grid, signal="mm", mod=None, response=None, lockin=None,
                     noise_rms=0.0, seed=None):
    """Demodulated output across a field grid.

    ``signal`` selects the field-modulated scan with drive (``"mm"``), the
    same without drive (``"mm0"``), or the RF-amplitude-modulated scan
    (``"am"``).
    """
    b = np.asarray(b_grid, dtype=float)
    if signal == "am":
        mod = mod or ModulationConfig("rf_amplitude")
        response = response or ResponseModel("am_mod")
        if mod.kind != "rf_amplitude":
            raise ValueError("AM scan needs an rf_amplitude modulation")
        if source.drive is None or source.drive.omega_rf == 0:
            return np.zeros(b.shape)
    elif signal in ("mm", "mm0"):
        mod = mod or ModulationConfig("field")
        response = response or ResponseModel("field_mod")
        if mod.kind != "field":
            raise ValueError("field scans need a field modulation")
        if signal == "mm0":
            source = source.without_drive()
    else:
        raise ValueError(f"unknown signal {signal!r}")
    series = synthesize_timeseries(source, b, mod, response, noise_rms, seed)
    return lockin_demodulate(series, mod, lockin)


def reconstruct_by_integration(u_values, b_grid, anchor_value, mod_amplitude):
    """Photocurrent (uA) recovered from a field-modulated demodulated scan.

    Integrates ``u / mod_amplitude`` over B with the trapezoid rule and
    shifts the result so that its value at B = 0 equals ``anchor_value``.
    """
    b = np.asarray(b_grid, dtype=float)
    u = np.asarray(u_values, dtype=float)
    if np.any(np.diff(b) <= 0):
        raise ValueError("b_grid must be strictly increasing")
    if not b[0] <= 0 <= b[-1]:
        raise ValueError("B = 0 must lie inside the grid")
    c = cumulative_trapezoid(u / mod_amplitude, b, initial=0.0)
    hit = np.flatnonzero(b == 0)
    if hit.size:
        out = c + (anchor_value - c[hit[0]])
        out[hit[0]] = anchor_value
    else:
        out = c + (anchor_value - float(np.interp(0.0, b, c)))
    return out


def _richardson_slope(fn, steps):
    h1, h2 = steps
    d1 = (fn(h1) - fn(-h1)) / (2 * h1)
    d2 = (fn(h2) - fn(-h2)) / (2 * h2)
    ratio = (h1 / h2) ** 2
    return (ratio * d2 - d1) / (ratio - 1)


def slope_at_zero(source, mod=None, response=None, lockin=None, steps=(0.05, 0.025),
                  noise_rms=0.0, seed=None):
    """Zero-field steepness of the field-modulated demodulated signal.

    The derivative at B = 0 of the demodulated scan (uA/G) is taken by
    central differences at the two ``steps`` combined by Richardson
    extrapolation.  ``normalized_slope`` divides it by the same quantity for
    the no-drive curve, so it is exactly 1 without drive and changes sign
    when the drive reverses the curvature of the line centre.  Optional
    white noise is drawn from ``seed`` for every simulated record.
    """
    mod = mod or ModulationConfig("field")
    response = response or ResponseModel("field_mod")

    def u(src):
        return lambda b: float(scan_demodulated(src, [b], "mm", mod, response, lockin,
                                                       noise_rms, seed)[0])

    ref = _richardson_slope(u(source.without_drive()), steps)
    if source.drive is None or source.drive.omega_rf == 0:
        val = ref
    else:
        val = _richardson_slope(u(source), steps)
    if not (np.isfinite(val) and np.isfinite(ref)) or ref == 0:
        raise FloatingPointError("slope is not finite")
    return SlopeResult(slope=float(val), normalized_slope=float(val / ref), reference_slope=float(ref))


def slope_vs_drive(source, omega_grid, f_rf, mod=None, response=None, lockin=None):
    """Normalized zero-field slope for each drive amplitude in ``omega_grid``."""
    out = []
    for om in omega_grid:
        src = source.with_drive(DriveParams(float(om), f_rf) if om > 0 else None)
        out.append(slope_at_zero(src, mod, response, lockin).normalized_slope)
    return np.array(out)


def summarize_slope_curve(omegas, ratios):
    """Zero crossings and the extremum of a normalized-slope curve.

    Returns a dict with the first zero crossing (linear interpolation, or
    None), the number of sign changes, and the position and value of the
    largest-magnitude point beyond zero drive (parabolic refinement).
    """
    x = np.asarray(omegas, dtype=float)
    y = np.asarray(ratios, dtype=float)
    flips = np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)
    crossing = None
    if flips.size:
        j = int(flips[0])
        crossing = float(x[j] - y[j] * (x[j + 1] - x[j]) / (y[j + 1] - y[j]))
    mask = x > 0
    idx = np.flatnonzero(mask)
    k = int(idx[np.argmax(np.abs(y[idx]))])
    pos, val = float(x[k]), float(y[k])
    if 0 < k < len(x) - 1 and mask[k - 1]:
        den = y[k - 1] - 2 * y[k] + y[k + 1]
        if den != 0:
            off = 0.5 * (y[k - 1] - y[k + 1]) / den
            if abs(off) < 1:
                h = x[k] - x[k - 1]
                pos = float(x[k] + off * h)
                val = float(y[k] - 0.25 * (y[k - 1] - y[k + 1]) * off)
    return {
        "zero_crossing_mhz": crossing,
        "sign_changes": int(flips.size),
        "extremum_mhz": pos,
        "extremum_ratio": val,
    }


def frequency_response_curve(kind, f_grid, response: ResponseModel, source=None, b0=None,
                             mod=None, lockin=None):
    """End-to-end demodulated amplitude versus modulation frequency.

    Each point runs synthesis and demodulation at that ``f_mod`` and is
    divided by the amplitude obtained with a flat response, i.e. the
    low-frequency limit of the same pipeline.
    """
    f = np.asarray(f_grid, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequencies must be positive")
    if kind == "field":
        source = source or CurveSource()
        b0 = 1.0 if b0 is None else b0
        base = mod or ModulationConfig("field")
    elif kind == "rf_amplitude":
        source = source or CurveSource(DriveParams(4.1, 5.3))
        b0 = 0.0 if b0 is None else b0
        base = mod or ModulationConfig("rf_amplitude")
    else:
        raise ValueError("kind must be 'field' or 'rf_amplitude'")
    out = []
    for fm in f:
        m = base.with_frequency(fm)
        a = lockin_demodulate(synthesize_timeseries(source, b0, m, response), m, lockin)
        a0 = lockin_demodulate(synthesize_timeseries(source, b0, m, IDENTITY_RESPONSE), m, lockin)
        out.append(float(a / a0))
    return np.array(out)


def minus_3db_frequency(f_grid, amplitude):
    """Frequency where the amplitude first drops to 1/sqrt(2) (log interpolation)."""
    f = np.asarray(f_grid, dtype=float)
    a = np.asarray(amplitude, dtype=float)
    target = 1 / math.sqrt(2)
    below = np.flatnonzero(a <= target)
    if not below.size or below[0] == 0:
        raise ValueError("amplitude does not cross -3 dB inside the grid")
    j = int(below[0])
    lf = np.interp(target, [a[j], a[j - 1]], [math.log(f[j]), math.log(f[j - 1])])
    return float(math.exp(lf))


def loglog_slope(f_grid, amplitude, f_min):
    """Least-squares slope of log(amplitude) versus log(f) for f >= f_min."""
    f = np.asarray(f_grid, dtype=float)
    a = np.asarray(amplitude, dtype=float)
    sel = f >= f_min
    return float(np.polyfit(np.log(f[sel]), np.log(a[sel]), 1)[0])
